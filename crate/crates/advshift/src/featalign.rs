//! Local adversarial feature learning on the F1 feature map.
//!
//! A per-location domain discriminator (two 1x1 convolutions, Cf -> 32 -> 1,
//! sigmoid output) predicts 0 for source and 1 for target. The losses are
//! least squares: mean `p^2` over locations for (perturbed) source features
//! and mean `(1 - p)^2` for target features. The gradient reversal layer is
//! the identity forward and multiplies by `-lambda` backward, turning the
//! discriminator's minimization into F1's maximization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedSample;
use crate::detector::{forward_trace, loss_det, DetectorConfig, DetectorParams, RawPrediction};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{sigmoid, Activation};
use crate::rng::{derive, STREAM_PARAM_INIT};
use crate::tensor::Tensor3;

/// Hidden width of the discriminator (Cf -> 32 -> 1).
pub const DISC_HIDDEN: usize = 32;

/// Per-location domain probabilities, shape `(1, Hf, Wf)`, entries in [0,1].
pub type DomainPredictionMap = Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    /// Objective weight for the alignment terms; also the gradient-reversal
    /// scale.
    pub lambda: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { lambda: 1.0 }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Weights of the 1x1-conv discriminator, stored flat:
/// `w1[hidden * cf] | b1[hidden] | w2[hidden] | b2[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub cf: usize,
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl DiscriminatorParams {
    pub fn param_len(cf: usize, hidden: usize) -> usize {
        hidden * cf + hidden + hidden + 1
    }

    pub fn init(cf: usize, seed: u64) -> DiscriminatorParams {
        let hidden = DISC_HIDDEN;
        let mut data = vec![0.0; Self::param_len(cf, hidden)];
        let mut rng = derive(seed, STREAM_PARAM_INIT, 1_000);
        let bound1 = (2.0 / cf as f64).sqrt();
        for v in &mut data[0..hidden * cf] {
            *v = rng.gen_range(-bound1..bound1);
        }
        let bound2 = (2.0 / hidden as f64).sqrt();
        let w2_start = hidden * cf + hidden;
        for v in &mut data[w2_start..w2_start + hidden] {
            *v = rng.gen_range(-bound2..bound2);
        }
        DiscriminatorParams { cf, hidden, data }
    }

    pub fn zeros(cf: usize) -> DiscriminatorParams {
        DiscriminatorParams {
            cf,
            hidden: DISC_HIDDEN,
            data: vec![0.0; Self::param_len(cf, DISC_HIDDEN)],
        }
    }

    fn w1(&self) -> &[f64] {
        &self.data[0..self.hidden * self.cf]
    }

    fn b1(&self) -> &[f64] {
        &self.data[self.hidden * self.cf..self.hidden * self.cf + self.hidden]
    }

    fn w2(&self) -> &[f64] {
        let s = self.hidden * self.cf + self.hidden;
        &self.data[s..s + self.hidden]
    }

    fn b2(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Intermediate activations kept for the discriminator backward pass.
#[derive(Debug, Clone)]
pub struct DiscTrace {
    pub hidden_post: Tensor3,
    pub probs: Tensor3,
}

fn check_feat(d: &DiscriminatorParams, feat: &Tensor3) -> Result<()> {
    if feat.c != d.cf {
        return Err(Error::Config(format!(
            "feature map has {} channels, discriminator expects {}",
            feat.c, d.cf
        )));
    }
    Ok(())
}

/// Domain prediction map with the trace needed for gradients. The output
/// spatial dims equal the feature map's; 1x1 kernels keep every prediction
/// strictly per-location.
pub fn discriminate_trace(
    d: &DiscriminatorParams,
    feat: &Tensor3,
) -> Result<(DomainPredictionMap, DiscTrace)> {
    check_feat(d, feat)?;
    let (h, w) = (feat.h, feat.w);
    let mut hidden_post = Tensor3::zeros(d.hidden, h, w);
    let (w1, b1, w2, b2) = (d.w1(), d.b1(), d.w2(), d.b2());
    for j in 0..d.hidden {
        for y in 0..h {
            for x in 0..w {
                let mut acc = b1[j];
                for c in 0..d.cf {
                    acc += w1[j * d.cf + c] * feat.at(c, y, x);
                }
                *hidden_post.at_mut(j, y, x) = Activation::LeakyRelu.apply(acc);
            }
        }
    }
    let mut probs = Tensor3::zeros(1, h, w);
    for y in 0..h {
        for x in 0..w {
            let mut z = b2;
            for j in 0..d.hidden {
                z += w2[j] * hidden_post.at(j, y, x);
            }
            *probs.at_mut(0, y, x) = sigmoid(z);
        }
    }
    Ok((probs.clone(), DiscTrace { hidden_post, probs }))
}

/// Per-location sigmoid domain probabilities for a feature map.
pub fn discriminate(d: &DiscriminatorParams, feat: &Tensor3) -> Result<DomainPredictionMap> {
    Ok(discriminate_trace(d, feat)?.0)
}

/// Mean squared prediction over locations: zero exactly when every source
/// prediction hits its target value 0.
pub fn afl_loss_source(map: &DomainPredictionMap) -> f64 {
    map.data.iter().map(|p| p * p).sum::<f64>() / map.data.len() as f64
}

/// Mean squared complement: zero exactly at the target value 1.
pub fn afl_loss_target(map: &DomainPredictionMap) -> f64 {
    map.data.iter().map(|p| (1.0 - p) * (1.0 - p)).sum::<f64>() / map.data.len() as f64
}

/// Gradient reversal: identity forward, `-lambda * upstream` backward.
pub fn grl_backward(upstream: &Tensor3, lambda: f64) -> Tensor3 {
    let mut out = upstream.clone();
    for v in &mut out.data {
        *v *= -lambda;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSide {
    Source,
    Target,
}

/// Backward pass of one AFL loss through the discriminator. Returns the
/// unweighted gradients w.r.t. discriminator parameters and w.r.t. the
/// feature map (before any gradient reversal).
pub fn afl_backward(
    d: &DiscriminatorParams,
    feat: &Tensor3,
    trace: &DiscTrace,
    side: DomainSide,
) -> (Vec<f64>, Tensor3) {
    let (h, w) = (feat.h, feat.w);
    let n = (h * w) as f64;
    let mut grads = vec![0.0; d.data.len()];
    let mut dfeat = Tensor3::zeros(feat.c, h, w);
    let (w1, w2) = (d.w1(), d.w2());
    let w1_len = d.hidden * d.cf;
    let w2_start = w1_len + d.hidden;
    for y in 0..h {
        for x in 0..w {
            let p = trace.probs.at(0, y, x);
            let dp = match side {
                DomainSide::Source => 2.0 * p / n,
                DomainSide::Target => -2.0 * (1.0 - p) / n,
            };
            let dz = dp * p * (1.0 - p);
            grads[w1_len + d.hidden + d.hidden] += dz; // b2
            for j in 0..d.hidden {
                let hj = trace.hidden_post.at(j, y, x);
                grads[w2_start + j] += dz * hj;
                let dh = dz * w2[j];
                let dpre = dh * Activation::LeakyRelu.derivative_from_output(hj);
                grads[w1_len + j] += dpre; // b1
                for c in 0..d.cf {
                    grads[j * d.cf + c] += dpre * feat.at(c, y, x);
                    *dfeat.at_mut(c, y, x) += dpre * w1[j * d.cf + c];
                }
            }
        }
    }
    (grads, dfeat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedLosses {
    pub l_det: f64,
    pub l_afl_s: f64,
    pub l_afl_t: f64,
    pub total: f64,
}

/// Forward evaluation of the combined objective
/// `l_det(F(x_s + delta)) + lambda * (l_afl_s + l_afl_t)`.
/// With `lambda = 0` this reduces to plain adversarial training, and with a
/// zero `delta_star` as well, to standard training.
pub fn combined_losses(
    params: &DetectorParams,
    d_params: &DiscriminatorParams,
    config: &DetectorConfig,
    source: &AnnotatedSample,
    delta_star: &Tensor3,
    target_image: &Image,
    lambda: f64,
) -> Result<CombinedLosses> {
    let perturbed = source.image.perturbed(delta_star);
    let trace = forward_trace(params, &perturbed.pixels)?;
    let raw = RawPrediction::new(trace.raw().clone(), config);
    let l_det = loss_det(&raw, &source.labels, config)?.l_det;
    let source_map = discriminate(d_params, trace.feature_map(params))?;
    let l_afl_s = afl_loss_source(&source_map);
    let target_trace = crate::detector::forward_f1(params, &target_image.pixels)?;
    let target_map = discriminate(d_params, target_trace.activations.last().unwrap())?;
    let l_afl_t = afl_loss_target(&target_map);
    Ok(CombinedLosses {
        l_det,
        l_afl_s,
        l_afl_t,
        total: l_det + lambda * (l_afl_s + l_afl_t),
    })
}
