use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the micro single-scale anchor detector.
///
/// The network is an explicit two-stage composition: `f1` (the feature
/// extractor whose output feeds the domain discriminator) followed by `f2`
/// (the prediction head). Defaults give a 64x64 input, an 8x8 grid, three
/// anchors and three classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Grid size S; the raw prediction is S x S x A x (5 + C).
    pub grid_size: usize,
    /// Anchor (w, h) pairs in normalized image units.
    pub anchors: Vec<(f64, f64)>,
    pub num_classes: usize,
    /// Output channel widths of the F1 convolutions.
    pub f1_channels: Vec<usize>,
    /// Strides of the F1 convolutions (same length as `f1_channels`).
    pub f1_strides: Vec<usize>,
    /// Hidden channel widths of F2; the final `A * (5 + C)` projection is
    /// appended automatically.
    pub f2_channels: Vec<usize>,
    /// (height, width) of input images.
    pub input_resolution: (usize, usize),
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            grid_size: 8,
            anchors: vec![(0.20, 0.20), (0.35, 0.35), (0.50, 0.50)],
            num_classes: 3,
            f1_channels: vec![8, 16, 32, 32],
            f1_strides: vec![2, 2, 2, 1],
            f2_channels: vec![32],
            input_resolution: (64, 64),
        }
    }
}

impl DetectorConfig {
    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Entries per anchor: tx, ty, tw, th, objectness, C class logits.
    pub fn entries_per_anchor(&self) -> usize {
        5 + self.num_classes
    }

    /// Channels of the raw prediction tensor.
    pub fn head_channels(&self) -> usize {
        self.num_anchors() * self.entries_per_anchor()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_resolution;
        if self.grid_size == 0 || h == 0 || w == 0 {
            return Err(Error::Config("grid size and resolution must be positive".into()));
        }
        if h % self.grid_size != 0 || w % self.grid_size != 0 {
            return Err(Error::Config(format!(
                "grid size {} must divide resolution {}x{}",
                self.grid_size, h, w
            )));
        }
        if self.anchors.is_empty() {
            return Err(Error::Config("at least one anchor required".into()));
        }
        if self.anchors.iter().any(|&(aw, ah)| aw <= 0.0 || ah <= 0.0) {
            return Err(Error::Config("anchor sizes must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("at least one class required".into()));
        }
        if self.f1_channels.is_empty() || self.f1_channels.len() != self.f1_strides.len() {
            return Err(Error::Config(
                "f1_channels and f1_strides must be non-empty and equal length".into(),
            ));
        }
        if self.f1_strides.iter().any(|&s| s != 1 && s != 2) {
            return Err(Error::Config("f1 strides must be 1 or 2".into()));
        }
        // F1 must land exactly on the S x S grid so the head stays stride-1.
        let mut fh = h;
        let mut fw = w;
        for &s in &self.f1_strides {
            fh = crate::nn::conv_out_dim(fh, s);
            fw = crate::nn::conv_out_dim(fw, s);
        }
        if fh != self.grid_size || fw != self.grid_size {
            return Err(Error::Config(format!(
                "F1 output {}x{} does not match grid size {}",
                fh, fw, self.grid_size
            )));
        }
        Ok(())
    }

    /// A reduced configuration for fast gradient checks and examples:
    /// 32x32 input, 4x4 grid, slim channels, same layer structure.
    pub fn small() -> Self {
        DetectorConfig {
            grid_size: 4,
            anchors: vec![(0.3, 0.3), (0.55, 0.55)],
            num_classes: 3,
            f1_channels: vec![4, 8, 8, 8],
            f1_strides: vec![2, 2, 2, 1],
            f2_channels: vec![8],
            input_resolution: (32, 32),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        DetectorConfig::default().validate().unwrap();
        DetectorConfig::small().validate().unwrap();
    }

    #[test]
    fn grid_must_divide_resolution() {
        let cfg = DetectorConfig {
            grid_size: 7,
            ..DetectorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn f1_must_land_on_grid() {
        let cfg = DetectorConfig {
            f1_strides: vec![2, 2, 2, 2],
            ..DetectorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
