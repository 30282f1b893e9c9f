//! Flat parameter storage with an explicit F1/F2 partition.
//!
//! All weights and biases live in one `Vec<f64>` addressed through a
//! [`NetLayout`]. Flat storage makes the optimizer, checkpoints, finite
//! difference probes and gradient buffers trivial: they are all plain
//! `&[f64]` of the same length.

use std::ops::Range;

use rand::Rng;

use crate::detector::config::DetectorConfig;
use crate::error::Result;
use crate::nn::Activation;
use crate::rng::{derive, STREAM_PARAM_INIT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub act: Activation,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * 9
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetLayout {
    pub layers: Vec<LayerSpec>,
    /// Number of leading layers that form F1; the rest are F2.
    pub f1_layers: usize,
    offsets: Vec<usize>,
    pub total_params: usize,
}

impl NetLayout {
    pub fn from_config(config: &DetectorConfig) -> Result<NetLayout> {
        config.validate()?;
        let (h, w) = config.input_resolution;
        let mut layers = Vec::new();
        let mut cin = 3;
        let (mut ih, mut iw) = (h, w);
        for (i, (&cout, &stride)) in config
            .f1_channels
            .iter()
            .zip(&config.f1_strides)
            .enumerate()
        {
            let _ = i;
            let oh = crate::nn::conv_out_dim(ih, stride);
            let ow = crate::nn::conv_out_dim(iw, stride);
            layers.push(LayerSpec {
                cin,
                cout,
                stride,
                act: Activation::LeakyRelu,
                in_h: ih,
                in_w: iw,
                out_h: oh,
                out_w: ow,
            });
            cin = cout;
            ih = oh;
            iw = ow;
        }
        let f1_layers = layers.len();
        for &cout in &config.f2_channels {
            layers.push(LayerSpec {
                cin,
                cout,
                stride: 1,
                act: Activation::LeakyRelu,
                in_h: ih,
                in_w: iw,
                out_h: ih,
                out_w: iw,
            });
            cin = cout;
        }
        // Linear projection to the S x S x A x (5 + C) raw prediction.
        layers.push(LayerSpec {
            cin,
            cout: config.head_channels(),
            stride: 1,
            act: Activation::Linear,
            in_h: ih,
            in_w: iw,
            out_h: ih,
            out_w: iw,
        });
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0usize;
        for l in &layers {
            offsets.push(total);
            total += l.param_len();
        }
        Ok(NetLayout {
            layers,
            f1_layers,
            offsets,
            total_params: total,
        })
    }

    pub fn w_range(&self, layer: usize) -> Range<usize> {
        let start = self.offsets[layer];
        start..start + self.layers[layer].weight_len()
    }

    pub fn b_range(&self, layer: usize) -> Range<usize> {
        let start = self.offsets[layer] + self.layers[layer].weight_len();
        start..start + self.layers[layer].cout
    }

    /// Parameter index range covering all F1 layers.
    pub fn f1_range(&self) -> Range<usize> {
        0..self.offsets[self.f1_layers]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub layout: NetLayout,
    pub data: Vec<f64>,
}

impl DetectorParams {
    /// Seeded uniform init, bound `sqrt(2 / fan_in)` per layer, zero biases.
    pub fn init(config: &DetectorConfig, seed: u64) -> Result<DetectorParams> {
        let layout = NetLayout::from_config(config)?;
        let mut data = vec![0.0; layout.total_params];
        for (i, layer) in layout.layers.iter().enumerate() {
            let mut rng = derive(seed, STREAM_PARAM_INIT, i as u64);
            let bound = (2.0 / (layer.cin as f64 * 9.0)).sqrt();
            for v in &mut data[layout.w_range(i)] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(DetectorParams { layout, data })
    }

    pub fn zeros(config: &DetectorConfig) -> Result<DetectorParams> {
        let layout = NetLayout::from_config(config)?;
        let data = vec![0.0; layout.total_params];
        Ok(DetectorParams { layout, data })
    }

    pub fn layer_w(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.w_range(layer)]
    }

    pub fn layer_b(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.b_range(layer)]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel count of the F1 output feature map.
    pub fn feature_channels(&self) -> usize {
        self.layout.layers[self.layout.f1_layers - 1].cout
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_partitions_f1_and_f2() {
        let cfg = DetectorConfig::default();
        let layout = NetLayout::from_config(&cfg).unwrap();
        assert_eq!(layout.f1_layers, 4);
        assert_eq!(layout.layers.len(), 6);
        assert_eq!(layout.layers[3].out_h, 8);
        assert_eq!(layout.layers[3].cout, 32);
        assert_eq!(layout.layers[5].cout, 3 * 8);
        assert_eq!(layout.layers[5].act, Activation::Linear);
        // contiguous, non-overlapping parameter ranges
        let mut total = 0;
        for i in 0..layout.layers.len() {
            assert_eq!(layout.w_range(i).start, total);
            total = layout.b_range(i).end;
        }
        assert_eq!(total, layout.total_params);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = DetectorConfig::small();
        let a = DetectorParams::init(&cfg, 42).unwrap();
        let b = DetectorParams::init(&cfg, 42).unwrap();
        let c = DetectorParams::init(&cfg, 43).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        assert!(a.all_finite());
    }

    #[test]
    fn biases_start_at_zero() {
        let cfg = DetectorConfig::small();
        let p = DetectorParams::init(&cfg, 1).unwrap();
        for i in 0..p.layout.layers.len() {
            assert!(p.layer_b(i).iter().all(|&b| b == 0.0));
        }
    }
}
