//! Experiment configuration: JSON file plus flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The verification campaigns the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DiffeoInvariance,
    WilsonCovariance,
    BridgeDiagram,
    ReluRescale,
    CnnRescale,
    AttentionGauge,
    AttentionNode,
    RegularizerTrain,
    OrbitOrthogonality,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::DiffeoInvariance,
        ExperimentKind::WilsonCovariance,
        ExperimentKind::BridgeDiagram,
        ExperimentKind::ReluRescale,
        ExperimentKind::CnnRescale,
        ExperimentKind::AttentionGauge,
        ExperimentKind::AttentionNode,
        ExperimentKind::RegularizerTrain,
        ExperimentKind::OrbitOrthogonality,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::DiffeoInvariance => "diffeo-invariance",
            ExperimentKind::WilsonCovariance => "wilson-covariance",
            ExperimentKind::BridgeDiagram => "bridge-diagram",
            ExperimentKind::ReluRescale => "relu-rescale",
            ExperimentKind::CnnRescale => "cnn-rescale",
            ExperimentKind::AttentionGauge => "attention-gauge",
            ExperimentKind::AttentionNode => "attention-node",
            ExperimentKind::RegularizerTrain => "regularizer-train",
            ExperimentKind::OrbitOrthogonality => "orbit-orthogonality",
        }
    }

    fn default_dimension(&self) -> usize {
        match self {
            ExperimentKind::BridgeDiagram | ExperimentKind::AttentionNode => 2,
            ExperimentKind::RegularizerTrain | ExperimentKind::OrbitOrthogonality => 1,
            _ => 3,
        }
    }

    fn default_grid_sizes(&self) -> Vec<usize> {
        match self {
            ExperimentKind::WilsonCovariance => vec![256, 512, 1024, 2048],
            ExperimentKind::BridgeDiagram => vec![1024, 2048, 4096],
            ExperimentKind::DiffeoInvariance => vec![2048],
            ExperimentKind::AttentionNode => vec![1024],
            ExperimentKind::OrbitOrthogonality => vec![1024],
            ExperimentKind::RegularizerTrain => vec![16],
            _ => vec![],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                ConfigError(format!(
                    "unknown experiment kind '{s}' (field: kind; known kinds: {})",
                    known.join(", ")
                ))
            })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ConfigError(format!(
                "unknown format '{other}' (field: format; expected json or csv)"
            ))),
        }
    }
}

/// On-disk schema: a single top-level object with optional fields; flags
/// override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: Option<String>,
    pub dimension: Option<usize>,
    pub grid_sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub output: Option<String>,
    pub format: Option<ReportFormat>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("cannot parse {}: {e}", path.display())))
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dimension: usize,
    pub grid_sizes: Vec<usize>,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub output: Option<String>,
    pub format: ReportFormat,
}

impl ExperimentConfig {
    /// Merge a config file with flag overrides and fill per-kind defaults.
    pub fn resolve(
        file: ConfigFile,
        kind_flag: Option<&str>,
        seed_flag: Option<u64>,
        out_flag: Option<String>,
        format_flag: Option<ReportFormat>,
    ) -> Result<Self, ConfigError> {
        let kind_name = kind_flag
            .map(str::to_owned)
            .or(file.kind)
            .ok_or_else(|| ConfigError("missing experiment kind (field: kind)".into()))?;
        let kind: ExperimentKind = kind_name.parse()?;
        let dimension = file.dimension.unwrap_or_else(|| kind.default_dimension());
        if dimension == 0 {
            return Err(ConfigError("dimension must be >= 1 (field: dimension)".into()));
        }
        let grid_sizes = file.grid_sizes.unwrap_or_else(|| kind.default_grid_sizes());
        if grid_sizes.iter().any(|&n| n == 0) {
            return Err(ConfigError("grid sizes must be >= 1 (field: grid_sizes)".into()));
        }
        for (name, value) in &file.tolerances {
            if !(value > &0.0) {
                return Err(ConfigError(format!(
                    "tolerance '{name}' must be positive (field: tolerances)"
                )));
            }
        }
        Ok(Self {
            kind,
            dimension,
            grid_sizes,
            seed: seed_flag.or(file.seed).unwrap_or(0),
            tolerances: file.tolerances,
            output: out_flag.or(file.output),
            format: format_flag.or(file.format).unwrap_or_default(),
        })
    }

    /// Tolerance override with a per-kind default.
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_names_the_field() {
        let err = "no-such-kind".parse::<ExperimentKind>().unwrap_err();
        assert!(err.0.contains("field: kind"), "{err}");
    }

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile {
            kind: Some("relu-rescale".into()),
            seed: Some(3),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(file, Some("cnn-rescale"), Some(9), None, None)
            .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::CnnRescale);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn defaults_fill_in_per_kind() {
        let file = ConfigFile { kind: Some("wilson-covariance".into()), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file, None, None, None, None).unwrap();
        assert_eq!(cfg.dimension, 3);
        assert_eq!(cfg.grid_sizes, vec![256, 512, 1024, 2048]);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("invariance".to_string(), -1.0);
        let file = ConfigFile {
            kind: Some("diffeo-invariance".into()),
            tolerances,
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(file, None, None, None, None).is_err());
    }
}
