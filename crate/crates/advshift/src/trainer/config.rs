use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::featalign::AlignmentConfig;
use crate::perturb::{AttackMethod, PerturbationSpec};

/// The four training modes: standard, standard + feature alignment,
/// adversarial, adversarial + feature alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    St,
    #[serde(alias = "st-afl")]
    StAfl,
    At,
    #[serde(alias = "at-afl")]
    AtAfl,
}

impl TrainMode {
    pub fn uses_attack(self) -> bool {
        matches!(self, TrainMode::At | TrainMode::AtAfl)
    }

    pub fn uses_afl(self) -> bool {
        matches!(self, TrainMode::StAfl | TrainMode::AtAfl)
    }

    pub fn label(self) -> &'static str {
        match self {
            TrainMode::St => "st",
            TrainMode::StAfl => "st-afl",
            TrainMode::At => "at",
            TrainMode::AtAfl => "at-afl",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainMode> {
        match s {
            "st" => Ok(TrainMode::St),
            "st-afl" | "st_afl" => Ok(TrainMode::StAfl),
            "at" => Ok(TrainMode::At),
            "at-afl" | "at_afl" => Ok(TrainMode::AtAfl),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// Source-batch size; epochs are counted on the source dataset.
    pub batch_size: usize,
    /// Target-batch size when feature alignment is active.
    pub target_batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_epochs: usize,
    pub perturbation: PerturbationSpec,
    pub alignment: AlignmentConfig,
    pub seed: u64,
    /// Replicate count for averaged results.
    pub runs: usize,
    /// Label-adjusted horizontal flip, off by default so loss curves are
    /// deterministic functions of the dataset alone.
    pub horizontal_flip: bool,
    pub detector: DetectorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::At,
            epochs: 50,
            batch_size: 16,
            target_batch_size: 16,
            momentum: 0.937,
            weight_decay: 5.0e-4,
            lr_max: 1.0e-2,
            lr_min: 2.0e-3,
            warmup_epochs: 3,
            perturbation: PerturbationSpec::default(),
            alignment: AlignmentConfig::default(),
            seed: 0,
            runs: 3,
            horizontal_flip: false,
            detector: DetectorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, has_target: bool) -> Result<()> {
        self.detector.validate()?;
        self.perturbation.validate()?;
        self.alignment.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config("warmup_epochs cannot exceed epochs".into()));
        }
        if !(self.lr_max > 0.0 && self.lr_min > 0.0 && self.lr_max >= self.lr_min) {
            return Err(Error::Config("need lr_max >= lr_min > 0".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.mode.uses_afl() {
            if !has_target {
                return Err(Error::Config(format!(
                    "mode {} requires a target dataset",
                    self.mode.label()
                )));
            }
            if self.target_batch_size == 0 {
                return Err(Error::Config("target_batch_size must be >= 1".into()));
            }
        }
        if self.mode.uses_attack() && self.perturbation.method == AttackMethod::None {
            return Err(Error::Config(format!(
                "mode {} requires a perturbation method",
                self.mode.label()
            )));
        }
        Ok(())
    }

    /// The attack actually applied: ST modes force a zero perturbation.
    pub fn effective_perturbation(&self) -> PerturbationSpec {
        if self.mode.uses_attack() {
            self.perturbation
        } else {
            PerturbationSpec::none()
        }
    }
}
