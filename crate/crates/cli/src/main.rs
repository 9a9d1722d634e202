//! gauge-lab: deterministic experiment runner for the gauge-symmetry
//! verification campaigns.
//!
//! Exit codes: 0 all criteria pass, 1 at least one criterion fails,
//! 2 configuration or I/O error. GAUGE_LAB_THREADS caps trial parallelism.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{ConfigFile, ExperimentConfig, ReportFormat};
use report::Report;

#[derive(Parser)]
#[command(name = "gauge-lab", version, about = "Gauge-symmetry verification campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its report.
    Run {
        /// JSON config file; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiment kind (e.g. relu-rescale, wilson-covariance).
        #[arg(long)]
        kind: Option<String>,
        /// Master seed for all randomized trials.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path; the report goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format: json (default) or csv.
        #[arg(long)]
        format: Option<String>,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, kind, seed, out, format } => {
            let file = match config.map(|p| ConfigFile::load(&p)).transpose() {
                Ok(f) => f.unwrap_or_default(),
                Err(e) => {
                    eprintln!("{e}");
                    return 2;
                }
            };
            let format = match format.map(|f| f.parse::<ReportFormat>()).transpose() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("{e}");
                    return 2;
                }
            };
            let cfg = match ExperimentConfig::resolve(
                file,
                kind.as_deref(),
                seed,
                out.map(|p| p.display().to_string()),
                format,
            ) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("{e}");
                    return 2;
                }
            };
            run_experiment(cfg)
        }
    }
}

fn run_experiment(cfg: ExperimentConfig) -> i32 {
    let start = Instant::now();
    let trials = match thread_cap() {
        Some(threads) => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool,
                Err(e) => {
                    eprintln!("config error: cannot build thread pool: {e}");
                    return 2;
                }
            };
            pool.install(|| experiments::run(&cfg))
        }
        None => experiments::run(&cfg),
    };
    let wall_time_ms = start.elapsed().as_millis() as u64;
    let report = Report::new(cfg.clone(), trials, wall_time_ms);

    let emit_result = match &cfg.output {
        Some(path) => std::fs::File::create(path)
            .and_then(|mut f| report.emit(&mut f, cfg.format))
            .map(|()| {
                let passed = report.trials.iter().filter(|t| t.passed).count();
                println!(
                    "{}: {} ({passed}/{} trials passed), report written to {path}",
                    cfg.kind,
                    if report.passed { "PASS" } else { "FAIL" },
                    report.trials.len(),
                );
            }),
        None => report.emit(&mut std::io::stdout().lock(), cfg.format),
    };
    if let Err(e) = emit_result {
        eprintln!("config error: cannot write report: {e}");
        return 2;
    }
    if report.passed {
        0
    } else {
        1
    }
}

fn thread_cap() -> Option<usize> {
    let raw = std::env::var("GAUGE_LAB_THREADS").ok()?;
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => Some(n),
        _ => {
            eprintln!("ignoring invalid GAUGE_LAB_THREADS value {raw:?}");
            None
        }
    }
}
