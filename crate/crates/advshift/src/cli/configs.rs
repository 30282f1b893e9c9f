//! JSON config schemas for the config-driven commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{DomainSpec, SceneSpec};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCounts {
    pub source_train: usize,
    pub source_test: usize,
    pub target_train: usize,
    pub target_test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        // benchmark-scale default: 500-image training splits
        SplitCounts {
            source_train: 500,
            source_test: 200,
            target_train: 500,
            target_test: 200,
        }
    }
}

/// Config for `advshift generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default = "DomainSpec::source")]
    pub source_domain: DomainSpec,
    #[serde(default = "DomainSpec::target")]
    pub target_domain: DomainSpec,
    #[serde(default)]
    pub counts: SplitCounts,
}

/// Config for `advshift train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCmdConfig {
    pub source_train: PathBuf,
    #[serde(default)]
    pub target_train: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepCounts {
    pub train: usize,
    pub test: usize,
}

impl Default for SweepCounts {
    fn default() -> Self {
        SweepCounts {
            train: 500,
            test: 200,
        }
    }
}

fn default_epsilons() -> Vec<f64> {
    [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|k| k / 255.0)
        .collect()
}

/// Config for `advshift sweep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Shift grid for the beta sweep.
    #[serde(default = "crate::metrics::default_beta_grid")]
    pub betas: Vec<f64>,
    /// Budget grid for the epsilon sweep; 0 is the ST baseline.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub counts: SweepCounts,
}

/// Loads and deserializes a JSON config, mapping serde errors (which name
/// the offending field) to config errors.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&raw)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_required_field_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        std::fs::write(&path, br#"{"out_dir": "somewhere"}"#).unwrap();
        let err = load_config::<GenerateConfig>(&path).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("seed"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn defaults_fill_in_optional_sections() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        std::fs::write(&path, br#"{"seed": 7, "out_dir": "x"}"#).unwrap();
        let cfg = load_config::<GenerateConfig>(&path).unwrap();
        assert_eq!(cfg.counts.source_train, 500);
        assert_eq!(cfg.counts.source_test, 200);
        assert_eq!(cfg.source_domain.beta, 0.0);
        assert!(cfg.source_domain.nonrobust_present);
        assert_eq!(cfg.target_domain.beta, 1.0);
    }

    #[test]
    fn epsilon_grid_includes_the_st_baseline() {
        let eps = default_epsilons();
        assert_eq!(eps[0], 0.0);
        assert!(eps.contains(&(1.0 / 255.0)));
    }
}
