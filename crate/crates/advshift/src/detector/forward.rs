//! Forward evaluation of the detector, split as `F2(F1(x))`.

use crate::detector::config::DetectorConfig;
use crate::detector::params::DetectorParams;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::conv3x3_forward;
use crate::tensor::Tensor3;

/// F1 output: a `(Cf, Hf, Wf)` feature map.
pub type FeatureMap = Tensor3;

/// Raw head output viewed as `S x S x A x (5 + C)`.
///
/// Channel `a * (5 + C) + k` at grid cell `(gy, gx)` holds, for anchor `a`:
/// `k = 0..4` box regressors `tx, ty, tw, th`, `k = 4` the objectness logit,
/// and `k >= 5` the class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub values: Tensor3,
    pub anchors: usize,
    pub entries: usize,
}

impl RawPrediction {
    pub fn new(values: Tensor3, config: &DetectorConfig) -> RawPrediction {
        debug_assert_eq!(values.c, config.head_channels());
        RawPrediction {
            values,
            anchors: config.num_anchors(),
            entries: config.entries_per_anchor(),
        }
    }

    pub fn grid(&self) -> usize {
        self.values.h
    }

    #[inline]
    pub fn at(&self, gy: usize, gx: usize, anchor: usize, k: usize) -> f64 {
        self.values.at(anchor * self.entries + k, gy, gx)
    }

    #[inline]
    pub fn at_mut(&mut self, gy: usize, gx: usize, anchor: usize, k: usize) -> &mut f64 {
        self.values.at_mut(anchor * self.entries + k, gy, gx)
    }

    pub fn zeros(config: &DetectorConfig) -> RawPrediction {
        RawPrediction {
            values: Tensor3::zeros(config.head_channels(), config.grid_size, config.grid_size),
            anchors: config.num_anchors(),
            entries: config.entries_per_anchor(),
        }
    }
}

/// Post-activation outputs of every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Tensor3>,
}

impl ForwardTrace {
    pub fn feature_map<'a>(&'a self, params: &DetectorParams) -> &'a Tensor3 {
        &self.activations[params.layout.f1_layers - 1]
    }

    pub fn raw(&self) -> &Tensor3 {
        self.activations.last().expect("non-empty trace")
    }
}

fn check_input(params: &DetectorParams, input: &Tensor3) -> Result<()> {
    let first = &params.layout.layers[0];
    if input.c != first.cin || input.h != first.in_h || input.w != first.in_w {
        return Err(Error::Config(format!(
            "input shape ({}, {}, {}) does not match detector input ({}, {}, {})",
            input.c, input.h, input.w, first.cin, first.in_h, first.in_w
        )));
    }
    Ok(())
}

/// Runs the full network, recording every layer output.
pub fn forward_trace(params: &DetectorParams, input: &Tensor3) -> Result<ForwardTrace> {
    check_input(params, input)?;
    let mut activations = Vec::with_capacity(params.layout.layers.len());
    let mut cur = input;
    for (i, layer) in params.layout.layers.iter().enumerate() {
        let out = conv3x3_forward(
            cur,
            params.layer_w(i),
            params.layer_b(i),
            layer.cout,
            layer.stride,
            layer.act,
        );
        activations.push(out);
        cur = activations.last().unwrap();
    }
    Ok(ForwardTrace { activations })
}

/// Runs only the F1 stage (used for target-domain images, which never reach
/// the detection head during adaptation).
pub fn forward_f1(params: &DetectorParams, input: &Tensor3) -> Result<ForwardTrace> {
    check_input(params, input)?;
    let mut activations = Vec::with_capacity(params.layout.f1_layers);
    let mut cur = input;
    for i in 0..params.layout.f1_layers {
        let layer = &params.layout.layers[i];
        let out = conv3x3_forward(
            cur,
            params.layer_w(i),
            params.layer_b(i),
            layer.cout,
            layer.stride,
            layer.act,
        );
        activations.push(out);
        cur = activations.last().unwrap();
    }
    Ok(ForwardTrace { activations })
}

/// `forward(params, image) -> (F1(x), F2(F1(x)))`.
pub fn forward(
    params: &DetectorParams,
    config: &DetectorConfig,
    image: &Image,
) -> Result<(FeatureMap, RawPrediction)> {
    let trace = forward_trace(params, &image.pixels)?;
    let feat = trace.feature_map(params).clone();
    let raw = RawPrediction::new(trace.raw().clone(), config);
    Ok((feat, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let v = ((x * 31 + y * 17 + ch * 57) % 256) as f64 / 255.0;
                    img.set(y, x, ch, v);
                }
            }
        }
        img
    }

    #[test]
    fn zero_params_produce_zero_prediction() {
        let cfg = DetectorConfig::default();
        let params = DetectorParams::zeros(&cfg).unwrap();
        let img = test_image(64, 64);
        let (feat, raw) = forward(&params, &cfg, &img).unwrap();
        assert!(feat.data.iter().all(|&v| v == 0.0));
        assert!(raw.values.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_map_is_8x8_under_default_config() {
        let cfg = DetectorConfig::default();
        let params = DetectorParams::init(&cfg, 0).unwrap();
        let (feat, raw) = forward(&params, &cfg, &test_image(64, 64)).unwrap();
        assert_eq!((feat.h, feat.w, feat.c), (8, 8, 32));
        assert_eq!((raw.values.h, raw.values.w), (8, 8));
        assert_eq!(raw.values.c, 24);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = DetectorConfig::small();
        let params = DetectorParams::init(&cfg, 5).unwrap();
        let img = test_image(32, 32);
        let (_, a) = forward(&params, &cfg, &img).unwrap();
        let (_, b) = forward(&params, &cfg, &img).unwrap();
        assert_eq!(a.values.data, b.values.data);
    }

    #[test]
    fn wrong_resolution_is_a_config_error() {
        let cfg = DetectorConfig::default();
        let params = DetectorParams::init(&cfg, 0).unwrap();
        let img = test_image(32, 32);
        assert!(matches!(
            forward(&params, &cfg, &img),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn f1_prefix_matches_full_trace() {
        let cfg = DetectorConfig::small();
        let params = DetectorParams::init(&cfg, 9).unwrap();
        let img = test_image(32, 32);
        let full = forward_trace(&params, &img.pixels).unwrap();
        let f1 = forward_f1(&params, &img.pixels).unwrap();
        assert_eq!(
            full.feature_map(&params).data,
            f1.activations.last().unwrap().data
        );
    }
}
