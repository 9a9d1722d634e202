//! The nine verification campaigns. Each builds a deterministic list of
//! trials from the resolved configuration; trials within a campaign run in
//! parallel (capped by GAUGE_LAB_THREADS) and are reported in a stable order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use gauge_core::sampling;
use gauge_core::{
    apply_attention_gauge, apply_linear_gauge, build_attention_from_node,
    build_w_with_unit_holonomy, commuting_diagram_check, forward_conv, forward_relu, gauge_fix_qk,
    integrate, integrate_cubic_node, integrate_cubic_node_tokens, integrate_cubic_smoothed,
    integrate_linear, lie_deform, loss_gradient_fd, orbit_tangent, regularizer,
    regularizer_directional_derivative, rescale_conv, rescale_relu, self_attention,
    spatial_diffeo_deform, time_reparam_deform, train, wilson_gauge_covariance, wilson_line,
    Activation, AttentionGauge, AttentionLayer, ConvLayer, ConvNet, Dataset, DiffeoGenerator,
    DiscreteGauge, GaugeTransformLinear, GenericNode, InstantaneousCubic, LinearLayer,
    LinearNodeParams, OrbitGenerator, RegularizerConfig, ReluNet, RescaleParams, TimeGrid,
    TimeScalar, TimeSeriesField, TrainConfig,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::Trial;

/// Derive a sub-seed from the experiment master seed.
fn mix(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

fn par_trials<F>(count: u64, f: F) -> Vec<Trial>
where
    F: Fn(u64) -> Vec<Trial> + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(f)
        .collect::<Vec<Vec<Trial>>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Execute the configured experiment and return its trials.
pub fn run(cfg: &ExperimentConfig) -> Vec<Trial> {
    match cfg.kind {
        ExperimentKind::DiffeoInvariance => diffeo_invariance(cfg),
        ExperimentKind::WilsonCovariance => wilson_covariance(cfg),
        ExperimentKind::BridgeDiagram => bridge_diagram(cfg),
        ExperimentKind::ReluRescale => relu_rescale(cfg),
        ExperimentKind::CnnRescale => cnn_rescale(cfg),
        ExperimentKind::AttentionGauge => attention_gauge(cfg),
        ExperimentKind::AttentionNode => attention_node(cfg),
        ExperimentKind::RegularizerTrain => regularizer_train(cfg),
        ExperimentKind::OrbitOrthogonality => orbit_orthogonality(cfg),
    }
}

fn smooth_field(grid: TimeGrid, dim: usize, scale: f64, seed: u64) -> TimeSeriesField<DMatrix<f64>> {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, scale, &mut rng);
    let b = sampling::random_matrix_scaled(dim, scale, &mut rng);
    TimeSeriesField::from_fn(grid, |t| &a + &b * (PI * t).sin()).unwrap()
}

fn analytic_linear_node(dim: usize, seed: u64) -> GenericNode {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, 0.7, &mut rng);
    let b = sampling::random_vector_scaled(dim, 0.6, &mut rng);
    let af = a.clone();
    let aj = a.clone();
    GenericNode::new(dim, move |_, x| &af * x + &b)
        .with_jacobian(move |_, _| aj.clone())
        .with_time_derivative(move |_, x| DVector::zeros(x.len()))
}

fn analytic_time_dependent_node(dim: usize, seed: u64) -> GenericNode {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, 0.6, &mut rng);
    let b_mat = sampling::random_matrix_scaled(dim, 0.6, &mut rng);
    let c = sampling::random_vector_scaled(dim, 0.5, &mut rng);
    let (af, bf, cf) = (a.clone(), b_mat.clone(), c.clone());
    let (aj, bj) = (a.clone(), b_mat.clone());
    let (bt, ct) = (b_mat, c);
    GenericNode::new(dim, move |t, x| (&af + &bf * (PI * t).sin()) * x + &cf * (PI * t).cos())
        .with_jacobian(move |t, _| &aj + &bj * (PI * t).sin())
        .with_time_derivative(move |t, x| {
            (&bt * x) * (PI * (PI * t).cos()) - &ct * (PI * (PI * t).sin())
        })
}

fn analytic_generator(dim: usize, with_time_part: bool, seed: u64) -> DiffeoGenerator {
    let mut rng = sampling::rng_from_seed(seed);
    let mut u = sampling::random_vector_scaled(dim + 1, 1.0, &mut rng);
    let mut v = DMatrix::from_fn(dim + 1, dim, |_, _| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
    });
    v /= v.norm();
    if !with_time_part {
        u[0] = 0.0;
        for j in 0..dim {
            v[(0, j)] = 0.0;
        }
    }
    let (ue, ve) = (u.clone(), v.clone());
    let (ut, vt) = (u.clone(), v.clone());
    let vx = v;
    DiffeoGenerator::new(dim, move |t, x| (&ue + &ve * x) * (PI * t).sin())
        .with_time_derivative(move |t, x| (&ut + &vt * x) * (PI * (PI * t).cos()))
        .with_space_jacobian(move |t, _| &vx * (PI * t).sin())
}

fn diffeo_invariance(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let n = cfg.grid_sizes.first().copied().unwrap_or(2048);
    let grid = TimeGrid::new(1.0, n).unwrap();
    let tol = cfg.tolerance("invariance", 1e-6);
    let control_min = cfg.tolerance("negative-control-min", 1e-3);
    let ratio_gap = cfg.tolerance("ratio-gap", 0.5);
    let seed = cfg.seed;

    let mut trials = par_trials(20, |g| {
        let params = sampling::random_linear_params(grid, d, 0.6, mix(seed, 5000 + g));
        let gauge = sampling::random_smooth_gauge(grid, d, 0.25, mix(seed, 6000 + g));
        let transformed = apply_linear_gauge(&params, &gauge).unwrap();
        let mut worst = 0.0f64;
        for x0 in sampling::standard_normal_probes(d, 10, mix(seed, 7000 + g)) {
            let a = integrate_linear(&params, &x0).unwrap();
            let b = integrate_linear(&transformed, &x0).unwrap();
            worst = worst.max((a.output() - b.output()).norm());
        }
        vec![Trial::gate(format!("gauge-invariance[{g}]"), worst, tol)]
    });

    // boundary-violating control: G(T) ≠ 1 must move outputs
    let params = sampling::random_linear_params(grid, d, 0.6, mix(seed, 5100));
    let mut rng = sampling::rng_from_seed(mix(seed, 6100));
    let s = sampling::random_matrix_scaled(d, 0.4, &mut rng);
    let eye = DMatrix::identity(d, d);
    let bad = GaugeTransformLinear::new_unchecked(
        TimeSeriesField::from_fn(grid, |t| &eye + &s * (0.5 * PI * t).sin()).unwrap(),
        Some(TimeSeriesField::from_fn(grid, |t| &s * (0.5 * PI) * (0.5 * PI * t).cos()).unwrap()),
        TimeSeriesField::constant(grid, DVector::zeros(d)),
        Some(TimeSeriesField::constant(grid, DVector::zeros(d))),
    );
    let transformed = apply_linear_gauge(&params, &bad).unwrap();
    let mut control = 0.0f64;
    for x0 in sampling::standard_normal_probes(d, 10, mix(seed, 7100)) {
        let a = integrate_linear(&params, &x0).unwrap();
        let b = integrate_linear(&transformed, &x0).unwrap();
        control = control.max((a.output() - b.output()).norm());
    }
    trials.push(Trial::shortfall("negative-control", control_min, control));

    // infinitesimal second-order scaling for the three deformation routes
    let ratio_grid = TimeGrid::new(1.0, 1024).unwrap();
    trials.extend(par_trials(3, |s| {
        let mut out = Vec::new();
        for &a in &[1e-2, 1e-3] {
            // spatial diffeomorphism
            let node = analytic_linear_node(2, mix(seed, 300 + s));
            let eps = analytic_generator(2, false, mix(seed, 400 + s));
            let x0 = sampling::standard_normal_probes(2, 1, mix(seed, 500 + s)).pop().unwrap();
            let base = integrate(&node, &x0, ratio_grid).unwrap().output().clone();
            let dev = |amp: f64| {
                let deformed = spatial_diffeo_deform(&node, &eps, amp);
                (integrate(&deformed, &x0, ratio_grid).unwrap().output() - &base).norm()
            };
            out.push(Trial::gate(
                format!("spatial-diffeo-ratio-gap[seed={s},a={a:.0e}]"),
                (dev(a) / dev(0.5 * a) - 4.0).abs(),
                ratio_gap,
            ));

            // time reparametrization (non-autonomous force)
            let node = analytic_time_dependent_node(1, mix(seed, 310 + s));
            let eps0 =
                TimeScalar::new(|t| (PI * t).sin()).with_derivative(|t| PI * (PI * t).cos());
            let x0 = sampling::standard_normal_probes(1, 1, mix(seed, 510 + s)).pop().unwrap();
            let base = integrate(&node, &x0, ratio_grid).unwrap().output().clone();
            let dev = |amp: f64| {
                let deformed = time_reparam_deform(&node, &eps0, amp);
                (integrate(&deformed, &x0, ratio_grid).unwrap().output() - &base).norm()
            };
            out.push(Trial::gate(
                format!("time-reparam-ratio-gap[seed={s},a={a:.0e}]"),
                (dev(a) / dev(0.5 * a) - 4.0).abs(),
                ratio_gap,
            ));

            // full Lie deformation
            let node = analytic_linear_node(2, mix(seed, 320 + s));
            let eps = analytic_generator(2, true, mix(seed, 420 + s));
            let x0 = sampling::standard_normal_probes(2, 1, mix(seed, 520 + s)).pop().unwrap();
            let base = integrate(&node, &x0, ratio_grid).unwrap().output().clone();
            let dev = |amp: f64| {
                let deformed = lie_deform(&node, &eps, amp);
                let traj = deformed.integrate(&x0, ratio_grid).unwrap();
                (deformed.spatial(traj.output()) - &base).norm()
            };
            out.push(Trial::gate(
                format!("lie-ratio-gap[seed={s},a={a:.0e}]"),
                (dev(a) / dev(0.5 * a) - 4.0).abs(),
                ratio_gap,
            ));
        }
        out
    }));
    trials
}

fn wilson_covariance(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let grids = cfg.grid_sizes.clone();
    let finest = *grids.last().expect("grid_sizes validated non-empty");
    let tol_finest = cfg.tolerance("covariance", 1e-7);
    let min_order = cfg.tolerance("min-order", 1.9);
    let seed = cfg.seed;

    par_trials(20, |s| {
        let mut out = Vec::new();
        let mut residuals = Vec::new();
        for &n in &grids {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let w = smooth_field(grid, d, 0.6, mix(seed, 3000 + s));
            let gauge = sampling::random_smooth_gauge(grid, d, 0.25, mix(seed, 4000 + s));
            let residual = wilson_gauge_covariance(&w, &gauge, 1.0, 0.0).unwrap();
            // the gate scales with the expected second-order convergence, so
            // the coarse-grid rows double as the residual-vs-Δ CSV series
            let scale = (finest as f64 / n as f64).powi(2);
            out.push(Trial::gate(
                format!("covariance[seed={s},n={n}]"),
                residual,
                tol_finest * scale,
            ));
            residuals.push(residual);
        }
        if grids.len() >= 2 {
            let xs: Vec<f64> = grids.iter().map(|&n| (n as f64).log2()).collect();
            let ys: Vec<f64> = residuals.iter().map(|r| r.log2()).collect();
            let m = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / m;
            let my = ys.iter().sum::<f64>() / m;
            let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            out.push(Trial::shortfall(format!("order[seed={s}]"), min_order, -cov / var));
        }
        out
    })
}

fn bridge_diagram(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let layer_grid = cfg.grid_sizes.first().copied().unwrap_or(1024);
    let refined_grid = cfg.grid_sizes.get(1).copied().unwrap_or(2 * layer_grid);
    let io_grid = cfg.grid_sizes.get(2).copied().unwrap_or(4 * layer_grid);
    let layer_tol = cfg.tolerance("layer", 1e-4);
    let io_tol = cfg.tolerance("io", 1e-6);
    let min_improvement = cfg.tolerance("min-improvement", 3.0);
    let seed = cfg.seed;

    par_trials(5, |s| {
        let dg = DiscreteGauge::random(d, 4, 0.3, mix(seed, 2000 + s));
        let report_at = |n: usize| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let params = sampling::random_linear_params(grid, d, 0.6, mix(seed, 1000 + s));
            commuting_diagram_check(&params, &dg, 4).unwrap()
        };
        let base = report_at(layer_grid);
        let refined = report_at(refined_grid);
        let fine = report_at(io_grid);
        let layer_dev = base.max_weight_deviation.max(base.max_bias_deviation);
        let refined_dev = refined.max_weight_deviation.max(refined.max_bias_deviation);
        vec![
            Trial::gate(format!("layer-deviation[seed={s}]"), layer_dev, layer_tol),
            Trial::shortfall(
                format!("refinement-improvement[seed={s}]"),
                min_improvement,
                layer_dev / refined_dev,
            ),
            Trial::gate(format!("io-deviation[seed={s}]"), fine.io_deviation, io_tol),
        ]
    })
}

fn relu_rescale(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let tol = cfg.tolerance("rescale", 1e-12);
    let seed = cfg.seed;
    par_trials(20, |s| {
        let mut rng = sampling::rng_from_seed(mix(seed, 8000 + s));
        let layers: Vec<LinearLayer> = (0..4)
            .map(|_| LinearLayer {
                weight: sampling::random_matrix_scaled(d, 1.3, &mut rng),
                bias: sampling::random_vector_scaled(d, 0.9, &mut rng),
            })
            .collect();
        let net = ReluNet::new(layers).unwrap();
        let alpha = RescaleParams::new(
            (0..3)
                .map(|_| DVector::from_fn(d, |_, _| sampling::log_uniform(0.1, 10.0, &mut rng)))
                .collect(),
        )
        .unwrap();
        let scaled = rescale_relu(&net, &alpha).unwrap();
        let mut worst = 0.0f64;
        for x0 in sampling::standard_normal_probes(d, 20, mix(seed, 9000 + s)) {
            let a = forward_relu(&net, &x0).unwrap();
            let b = forward_relu(&scaled, &x0).unwrap();
            worst = worst.max((&a - &b).norm() / a.norm().max(1e-300));
        }
        // powers of two must be exactly neutral (zero tolerance gate)
        let pow2 = [0.25, 0.5, 2.0, 4.0, 8.0];
        let alpha2 = RescaleParams::new(
            (0..3)
                .map(|_| {
                    DVector::from_fn(d, |_, _| pow2[rand::Rng::random_range(&mut rng, 0..pow2.len())])
                })
                .collect(),
        )
        .unwrap();
        let scaled2 = rescale_relu(&net, &alpha2).unwrap();
        let mut exact_dev = 0.0f64;
        for x0 in sampling::standard_normal_probes(d, 5, mix(seed, 9500 + s)) {
            let a = forward_relu(&net, &x0).unwrap();
            let b = forward_relu(&scaled2, &x0).unwrap();
            exact_dev = exact_dev.max((a - b).amax());
        }
        vec![
            Trial::gate(format!("rescale[seed={s}]"), worst, tol),
            Trial::gate(format!("power-of-two[seed={s}]"), exact_dev, 0.0),
        ]
    })
}

fn cnn_rescale(cfg: &ExperimentConfig) -> Vec<Trial> {
    let tol = cfg.tolerance("rescale", 1e-12);
    let seed = cfg.seed;
    par_trials(10, |s| {
        let mut rng = sampling::rng_from_seed(mix(seed, 10_000 + s));
        let mut filter = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            })
        };
        let net = ConvNet::new(vec![
            ConvLayer::Conv { filter: filter(3, 3) },
            ConvLayer::Pool { exponent: 1.0, window: 2 },
            ConvLayer::Conv { filter: filter(2, 2) },
            ConvLayer::Pool { exponent: 2.0, window: 2 },
            ConvLayer::Conv { filter: filter(2, 2) },
            ConvLayer::Pool { exponent: f64::INFINITY, window: 2 },
        ])
        .unwrap();
        let mut alpha_rng = sampling::rng_from_seed(mix(seed, 11_000 + s));
        let alpha: Vec<f64> =
            (0..2).map(|_| sampling::log_uniform(0.2, 5.0, &mut alpha_rng)).collect();
        let scaled = rescale_conv(&net, &alpha).unwrap();
        let image =
            DMatrix::from_fn(16, 16, |i, j| ((i * 13 + j * 7 + s as usize) % 17) as f64 / 17.0);
        let a = forward_conv(&net, &image).unwrap();
        let b = forward_conv(&scaled, &image).unwrap();
        let rel = (&a - &b).norm() / a.norm().max(1e-300);
        vec![Trial::gate(format!("rescale[seed={s}]"), rel, tol)]
    })
}

fn attention_gauge(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let tol = cfg.tolerance("gauge", 1e-12);
    let qk_tol = cfg.tolerance("qk", 1e-12);
    let control_min = cfg.tolerance("softmax-control-min", 1e-3);
    let seed = cfg.seed;

    let mut trials = par_trials(20, |s| {
        let mut rng = sampling::rng_from_seed(mix(seed, 12_000 + s));
        let mut out = Vec::new();
        for (label, activation) in [("identity", Activation::Identity), ("relu", Activation::Relu)]
        {
            let layer = AttentionLayer::new(
                sampling::random_matrix_scaled(d, 1.0, &mut rng),
                sampling::random_matrix_scaled(d, 1.0, &mut rng),
                sampling::random_matrix_scaled(d, 1.0, &mut rng),
                activation,
                2,
            )
            .unwrap();
            let a_mat = DMatrix::identity(d, d) + sampling::random_matrix_scaled(d, 0.5, &mut rng);
            let alpha = sampling::log_uniform(0.5, 3.0, &mut rng);
            let gauge = AttentionGauge::from_a(a_mat, alpha).unwrap();
            let transformed = apply_attention_gauge(&layer, &gauge).unwrap();
            let mut worst = 0.0f64;
            for probe in 0..5u64 {
                let p = sampling::standard_normal_probes(2 * d, 1, mix(seed, 13_000 + 10 * s + probe))
                    .pop()
                    .unwrap();
                let x = DMatrix::from_fn(2, d, |i, j| p[i * d + j]);
                let h0 = self_attention(&layer, &x).unwrap();
                let h1 = self_attention(&transformed, &x).unwrap();
                worst = worst.max((&h0 - &h1).norm() / h0.norm().max(1e-300));
            }
            out.push(Trial::gate(format!("invariance-{label}[seed={s}]"), worst, tol));

            let a1 = DMatrix::identity(d, d) + sampling::random_matrix_scaled(d, 0.4, &mut rng);
            let unit = AttentionGauge::from_a(a1, 1.0).unwrap();
            let fixed = apply_attention_gauge(&layer, &unit).unwrap();
            out.push(Trial::gate(
                format!("qk-invariance-{label}[seed={s}]"),
                (gauge_fix_qk(&layer) - gauge_fix_qk(&fixed)).amax(),
                qk_tol,
            ));
        }
        out
    });

    let mut rng = sampling::rng_from_seed(mix(seed, 14_000));
    let layer = AttentionLayer::new(
        sampling::random_matrix_scaled(d, 1.0, &mut rng),
        sampling::random_matrix_scaled(d, 1.0, &mut rng),
        sampling::random_matrix_scaled(d, 1.0, &mut rng),
        Activation::Softmax,
        2,
    )
    .unwrap();
    let gauge =
        AttentionGauge::new(DMatrix::identity(d, d) * 2.0, DMatrix::identity(d, d), 2.0).unwrap();
    let transformed = apply_attention_gauge(&layer, &gauge).unwrap();
    let p = sampling::standard_normal_probes(2 * d, 1, mix(seed, 14_001)).pop().unwrap();
    let x = DMatrix::from_fn(2, d, |i, j| p[i * d + j]);
    let h0 = self_attention(&layer, &x).unwrap();
    let h1 = self_attention(&transformed, &x).unwrap();
    trials.push(Trial::shortfall("softmax-control", control_min, (h0 - h1).norm()));
    trials
}

fn attention_node(cfg: &ExperimentConfig) -> Vec<Trial> {
    let max_dim = cfg.dimension.min(3);
    let n_steps = cfg.grid_sizes.first().copied().unwrap_or(1024);
    let two_path_tol = cfg.tolerance("two-path", 1e-8);
    let oracle_tol = cfg.tolerance("oracle", 1e-10);
    let ratio_gap = cfg.tolerance("ratio-gap", 0.5);
    let magnitude = 1e-3;
    let seed = cfg.seed;

    let cases: Vec<(usize, usize, u64)> = (1..=max_dim)
        .flat_map(|dim| (1..=2usize).flat_map(move |tokens| (0..3u64).map(move |s| (dim, tokens, s))))
        .collect();
    let mut trials: Vec<Trial> = cases
        .into_par_iter()
        .map(|(dim, tokens, s)| {
            let grid = TimeGrid::new(1.0, n_steps).unwrap();
            let mut rng =
                sampling::rng_from_seed(mix(seed, 15_000 + 100 * dim as u64 + 10 * tokens as u64 + s));
            let m = sampling::random_matrix_scaled(dim, 0.9, &mut rng);
            let w = build_w_with_unit_holonomy(grid, &m);
            let kick = InstantaneousCubic::new(
                0.25,
                sampling::random_matrix_scaled(dim, 1.0, &mut rng),
                sampling::random_matrix_scaled(dim, 1.0, &mut rng),
                magnitude,
            )
            .unwrap();
            let layer = build_attention_from_node(&w, &kick, tokens).unwrap();
            let p = sampling::standard_normal_probes(dim * tokens, 1, mix(seed, 16_000 + s))
                .pop()
                .unwrap();
            let x = DMatrix::from_fn(tokens, dim, |i, j| p[i * dim + j]);
            let node_path = integrate_cubic_node_tokens(&w, &kick, &x).unwrap();
            let attention_path = &x + self_attention(&layer, &x).unwrap();
            let two_path = (&node_path - &attention_path).norm();

            let before = wilson_line(&w, 0.25, 0.0).unwrap().matrix;
            let after = wilson_line(&w, 1.0, 0.25).unwrap().matrix;
            let y = &x * before.transpose();
            let dn = dim * tokens;
            let z: Vec<f64> = (0..dn).map(|a| y[(a / dim, a % dim)]).collect();
            let mut jumped = y.clone();
            for a_out in 0..dn {
                let (cap_i, i) = (a_out / dim, a_out % dim);
                let mut acc = 0.0;
                for a1 in 0..dn {
                    let (cap_j, j) = (a1 / dim, a1 % dim);
                    for a2 in 0..dn {
                        let (cap_k, k) = (a2 / dim, a2 % dim);
                        if cap_k != cap_i {
                            continue;
                        }
                        for a3 in 0..dn {
                            let (cap_l, l) = (a3 / dim, a3 % dim);
                            if cap_l != cap_j {
                                continue;
                            }
                            acc += kick.lam[(i, j)] * kick.lam_tilde[(k, l)] * z[a1] * z[a2] * z[a3];
                        }
                    }
                }
                jumped[(cap_i, i)] += magnitude * acc;
            }
            let oracle = jumped * after.transpose();
            let oracle_dev = (&node_path - oracle).norm();
            vec![
                Trial::gate(format!("two-path[d={dim},n={tokens},seed={s}]"), two_path, two_path_tol),
                Trial::gate(
                    format!("tensor-oracle[d={dim},n={tokens},seed={s}]"),
                    oracle_dev,
                    oracle_tol,
                ),
            ]
        })
        .collect::<Vec<Vec<Trial>>>()
        .into_iter()
        .flatten()
        .collect();

    // smoothed-delta gap against the pre-kick convention scales as O(m²)
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let w = TimeSeriesField::constant(grid, DMatrix::zeros(1, 1));
    let x0 = DVector::from_vec(vec![2.0]);
    let gap_at = |m: f64| {
        let kick = InstantaneousCubic::new(
            0.5,
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            m,
        )
        .unwrap();
        let smoothed = integrate_cubic_smoothed(&w, &kick, 0.125, &x0, 64).unwrap();
        let kicked = integrate_cubic_node(&w, &kick, &x0).unwrap();
        (smoothed[0] - kicked[0]).abs()
    };
    let ratio = gap_at(magnitude) / gap_at(0.5 * magnitude);
    trials.push(Trial::gate("smoothed-delta-ratio-gap", (ratio - 4.0).abs(), ratio_gap));
    trials
}

fn regularizer_train(cfg: &ExperimentConfig) -> Vec<Trial> {
    let analytic_tol = cfg.tolerance("analytic", 1e-8);
    let family_tol = cfg.tolerance("zero-family", 1e-10);
    let train_steps = cfg.grid_sizes.first().copied().unwrap_or(16);
    let seed = cfg.seed;

    let mut trials = Vec::new();
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let params = LinearNodeParams::new(
        TimeSeriesField::constant(grid, DMatrix::from_element(1, 1, 2.0)),
        TimeSeriesField::constant(grid, DVector::zeros(1)),
    )
    .unwrap();
    let value = regularizer(&params, &RegularizerConfig::new(1.0).unwrap());
    trials.push(Trial::gate("analytic-quartic", (value - 16.0).abs(), analytic_tol));

    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let params = LinearNodeParams::new(
        TimeSeriesField::from_fn(grid, |t| DMatrix::from_element(1, 1, 1.0 / (1.0 + t))).unwrap(),
        TimeSeriesField::constant(grid, DVector::zeros(1)),
    )
    .unwrap();
    trials.push(Trial::gate(
        "zero-residual-family",
        regularizer(&params, &RegularizerConfig::new(1.0).unwrap()),
        family_tol,
    ));

    let grid = TimeGrid::new(1.0, train_steps).unwrap();
    let data = Dataset::new(vec![
        (DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.8])),
        (DVector::from_vec(vec![-0.5]), DVector::from_vec(vec![-0.9])),
    ])
    .unwrap();
    trials.extend(par_trials(10, |s| {
        let params0 = sampling::random_linear_params(grid, 1, 0.6, mix(seed, 17_000 + s));
        let tcfg = TrainConfig::new(0.05, 200, mix(seed, s), 1e-6).unwrap();
        let free = train(&params0, &data, &tcfg, &RegularizerConfig::new(0.0).unwrap())
            .unwrap()
            .1;
        let fixed = train(&params0, &data, &tcfg, &RegularizerConfig::new(0.5).unwrap())
            .unwrap()
            .1;
        let reg_free = free.records.last().unwrap().regularizer;
        let reg_fixed = fixed.records.last().unwrap().regularizer;
        vec![Trial::shortfall(format!("paired-run[seed={s}]"), 0.0, reg_free - reg_fixed)]
    }));
    trials
}

fn orbit_orthogonality(cfg: &ExperimentConfig) -> Vec<Trial> {
    let d = cfg.dimension;
    let n = cfg.grid_sizes.first().copied().unwrap_or(1024);
    let grid = TimeGrid::new(1.0, n).unwrap();
    let tol = cfg.tolerance("orthogonality", 1e-6);
    let slope_min = cfg.tolerance("regularizer-slope-min", 1e-3);
    let seed = cfg.seed;

    par_trials(10, |s| {
        let params = sampling::random_linear_params(grid, d, 0.5, mix(seed, 18_000 + s));
        let inputs = sampling::standard_normal_probes(d, 3, mix(seed, 19_000 + s));
        let data = Dataset::new(
            inputs
                .into_iter()
                .map(|x| {
                    let y = integrate_linear(&params, &x).unwrap().output() * 1.2;
                    (x, y)
                })
                .collect(),
        )
        .unwrap();
        let generator = OrbitGenerator::random_smooth(grid, d, 1.0, mix(seed, 20_000 + s));
        let tangent = orbit_tangent(&params, &generator).unwrap();
        let gradient = loss_gradient_fd(&params, &data, 1e-6).unwrap();
        let cosine = gradient.dot(&tangent).abs() / (gradient.norm() * tangent.norm());
        let slope = regularizer_directional_derivative(
            &params,
            &generator,
            &RegularizerConfig::new(1.0).unwrap(),
        )
        .unwrap()
        .abs();
        vec![
            Trial::gate(format!("orthogonality[seed={s}]"), cosine, tol),
            Trial::shortfall(format!("regularizer-slope[seed={s}]"), slope_min, slope),
        ]
    })
}
