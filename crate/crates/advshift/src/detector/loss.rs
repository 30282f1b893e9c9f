//! Detection loss: classification + localization + objectness.
//!
//! Functional forms (fixed for reproducibility):
//! - objectness: binary cross-entropy, responsible anchors as positives and
//!   every other anchor as a negative; the positive and negative sets are
//!   averaged separately so one-per-image positives are not drowned out.
//! - classification: per-class binary cross-entropy on the responsible
//!   anchor's class logits, averaged over classes and positives.
//! - localization: squared error on `(sigmoid(tx), sigmoid(ty), tw, th)`
//!   against encoded targets, averaged over the four components and the
//!   positives.
//!
//! `l_det` is defined as the exact sum of the three terms. Batch losses are
//! means over samples.

use serde::{Deserialize, Serialize};

use crate::dataset::BoxLabel;
use crate::detector::config::DetectorConfig;
use crate::detector::forward::RawPrediction;
use crate::error::Result;
use crate::nn::{bce_grad, bce_with_logit, sigmoid};
use crate::tensor::Tensor3;

/// Which term of the detection loss an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLoss {
    Det,
    Cls,
    Loc,
    Obj,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_det: f64,
    pub l_cls: f64,
    pub l_loc: f64,
    pub l_obj: f64,
}

impl LossBreakdown {
    pub fn zero() -> LossBreakdown {
        LossBreakdown {
            l_det: 0.0,
            l_cls: 0.0,
            l_loc: 0.0,
            l_obj: 0.0,
        }
    }

    pub fn select(&self, selector: TaskLoss) -> f64 {
        match selector {
            TaskLoss::Det => self.l_det,
            TaskLoss::Cls => self.l_cls,
            TaskLoss::Loc => self.l_loc,
            TaskLoss::Obj => self.l_obj,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_det.is_finite()
            && self.l_cls.is_finite()
            && self.l_loc.is_finite()
            && self.l_obj.is_finite()
    }
}

/// A ground-truth box bound to its responsible grid cell and anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub gy: usize,
    pub gx: usize,
    pub anchor: usize,
    pub label_idx: usize,
    /// Encoded regression targets: `sigmoid(tx)`, `sigmoid(ty)` targets in
    /// cell units, then `ln(w/aw)`, `ln(h/ah)`.
    pub targets: [f64; 4],
}

/// Co-centered IoU between a box size and an anchor size.
fn size_iou(w: f64, h: f64, aw: f64, ah: f64) -> f64 {
    let inter = w.min(aw) * h.min(ah);
    inter / (w * h + aw * ah - inter)
}

/// Maps each label to the cell containing its center and the free anchor
/// with highest size-IoU (ties broken by lowest anchor index). A label whose
/// cell has no free anchor left is skipped.
pub fn assign_anchors(labels: &[BoxLabel], config: &DetectorConfig) -> Result<Vec<Assignment>> {
    let s = config.grid_size;
    let a_count = config.num_anchors();
    let mut taken = vec![false; s * s * a_count];
    let mut out = Vec::with_capacity(labels.len());
    for (label_idx, label) in labels.iter().enumerate() {
        label.validate(config.num_classes)?;
        let gx = ((label.cx * s as f64).floor() as usize).min(s - 1);
        let gy = ((label.cy * s as f64).floor() as usize).min(s - 1);
        let mut order: Vec<usize> = (0..a_count).collect();
        order.sort_by(|&i, &j| {
            let ii = size_iou(label.w, label.h, config.anchors[i].0, config.anchors[i].1);
            let jj = size_iou(label.w, label.h, config.anchors[j].0, config.anchors[j].1);
            jj.partial_cmp(&ii).unwrap().then(i.cmp(&j))
        });
        for anchor in order {
            let slot = (gy * s + gx) * a_count + anchor;
            if !taken[slot] {
                taken[slot] = true;
                let (aw, ah) = config.anchors[anchor];
                out.push(Assignment {
                    gy,
                    gx,
                    anchor,
                    label_idx,
                    targets: [
                        label.cx * s as f64 - gx as f64,
                        label.cy * s as f64 - gy as f64,
                        (label.w / aw).ln(),
                        (label.h / ah).ln(),
                    ],
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Loss terms and, when `grad_selector` is given, the gradient of that term
/// with respect to the raw prediction values.
pub fn loss_with_grad(
    raw: &RawPrediction,
    labels: &[BoxLabel],
    config: &DetectorConfig,
    grad_selector: Option<TaskLoss>,
) -> Result<(LossBreakdown, Option<Tensor3>)> {
    let s = config.grid_size;
    let a_count = config.num_anchors();
    let entries = config.entries_per_anchor();
    let c_count = config.num_classes;
    let assignments = assign_anchors(labels, config)?;
    let n_pos = assignments.len();
    let n_total = s * s * a_count;
    let n_neg = n_total - n_pos;

    let mut positive = vec![false; n_total];
    for a in &assignments {
        positive[(a.gy * s + a.gx) * a_count + a.anchor] = true;
    }

    let mut grad = grad_selector
        .map(|_| Tensor3::zeros(a_count * entries, s, s));
    let want = |g: Option<TaskLoss>, t: TaskLoss| g == Some(TaskLoss::Det) || g == Some(t);

    // Objectness over every anchor.
    let mut obj_pos_sum = 0.0;
    let mut obj_neg_sum = 0.0;
    for gy in 0..s {
        for gx in 0..s {
            for a in 0..a_count {
                let z = raw.at(gy, gx, a, 4);
                let is_pos = positive[(gy * s + gx) * a_count + a];
                let target = if is_pos { 1.0 } else { 0.0 };
                let term = bce_with_logit(z, target);
                if is_pos {
                    obj_pos_sum += term;
                } else {
                    obj_neg_sum += term;
                }
                if want(grad_selector, TaskLoss::Obj) {
                    let denom = if is_pos { n_pos } else { n_neg } as f64;
                    if denom > 0.0 {
                        *grad.as_mut().unwrap().at_mut(a * entries + 4, gy, gx) +=
                            bce_grad(z, target) / denom;
                    }
                }
            }
        }
    }
    let mut l_obj = 0.0;
    if n_pos > 0 {
        l_obj += obj_pos_sum / n_pos as f64;
    }
    if n_neg > 0 {
        l_obj += obj_neg_sum / n_neg as f64;
    }

    // Classification and localization over responsible anchors.
    let mut l_cls = 0.0;
    let mut l_loc = 0.0;
    for asg in &assignments {
        let (gy, gx, a) = (asg.gy, asg.gx, asg.anchor);
        let label = &labels[asg.label_idx];
        for c in 0..c_count {
            let z = raw.at(gy, gx, a, 5 + c);
            let t = if c == label.class_id { 1.0 } else { 0.0 };
            l_cls += bce_with_logit(z, t) / (c_count * n_pos) as f64;
            if want(grad_selector, TaskLoss::Cls) {
                *grad.as_mut().unwrap().at_mut(a * entries + 5 + c, gy, gx) +=
                    bce_grad(z, t) / (c_count * n_pos) as f64;
            }
        }
        for k in 0..4usize {
            let z = raw.at(gy, gx, a, k);
            let (pred, dpred_dz) = if k < 2 {
                let sz = sigmoid(z);
                (sz, sz * (1.0 - sz))
            } else {
                (z, 1.0)
            };
            let diff = pred - asg.targets[k];
            l_loc += diff * diff / (4 * n_pos) as f64;
            if want(grad_selector, TaskLoss::Loc) {
                *grad.as_mut().unwrap().at_mut(a * entries + k, gy, gx) +=
                    2.0 * diff * dpred_dz / (4 * n_pos) as f64;
            }
        }
    }

    let breakdown = LossBreakdown {
        l_det: l_cls + l_loc + l_obj,
        l_cls,
        l_loc,
        l_obj,
    };
    Ok((breakdown, grad))
}

/// The three-term detection loss of a single raw prediction.
pub fn loss_det(
    raw: &RawPrediction,
    labels: &[BoxLabel],
    config: &DetectorConfig,
) -> Result<LossBreakdown> {
    Ok(loss_with_grad(raw, labels, config, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn label(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> BoxLabel {
        BoxLabel {
            class_id,
            cx,
            cy,
            w,
            h,
        }
    }

    #[test]
    fn saturated_negatives_give_near_zero_loss() {
        let cfg = DetectorConfig::default();
        let mut raw = RawPrediction::zeros(&cfg);
        for gy in 0..8 {
            for gx in 0..8 {
                for a in 0..3 {
                    *raw.at_mut(gy, gx, a, 4) = -20.0;
                }
            }
        }
        let b = loss_det(&raw, &[], &cfg).unwrap();
        assert_eq!(b.l_cls, 0.0);
        assert_eq!(b.l_loc, 0.0);
        assert!(b.l_obj < 1e-6, "l_obj = {}", b.l_obj);
    }

    #[test]
    fn single_positive_hand_computed() {
        // One GT centered in cell (4, 2) matching anchor 1 (0.35 beats 0.2
        // and 0.5 for a 0.3 box). All logits zero except hand-set ones.
        let cfg = DetectorConfig::default();
        let gt = label(2, 0.3125, 0.5625, 0.3, 0.3);
        let asg = assign_anchors(&[gt], &cfg).unwrap();
        assert_eq!(asg.len(), 1);
        assert_eq!((asg[0].gy, asg[0].gx, asg[0].anchor), (4, 2, 1));

        let mut raw = RawPrediction::zeros(&cfg);
        *raw.at_mut(4, 2, 1, 4) = 3.0; // objectness logit
        *raw.at_mut(4, 2, 1, 5 + 2) = 2.0; // correct class logit
        *raw.at_mut(4, 2, 1, 0) = 0.5; // tx

        let b = loss_det(&raw, &[gt], &cfg).unwrap();

        // objectness: positive bce(3, 1) + mean over 191 negatives bce(0, 0)
        let expected_obj = bce_with_logit(3.0, 1.0) + 191.0 * bce_with_logit(0.0, 0.0) / 191.0;
        assert!((b.l_obj - expected_obj).abs() < 1e-12);

        // classification: (bce(2,1) + 2*bce(0,0)) / 3
        let expected_cls = (bce_with_logit(2.0, 1.0) + 2.0 * bce_with_logit(0.0, 0.0)) / 3.0;
        assert!((b.l_cls - expected_cls).abs() < 1e-12);

        // localization: targets tx_hat = 0.3125*8-2 = 0.5, ty_hat = 0.5,
        // tw_hat = ln(0.3/0.35), th_hat = ln(0.3/0.35)
        let txh = 0.5;
        let tyh = 0.5;
        let twh = (0.3f64 / 0.35).ln();
        let sig = sigmoid(0.5);
        let expected_loc = ((sig - txh).powi(2)
            + (sigmoid(0.0) - tyh).powi(2)
            + twh.powi(2)
            + twh.powi(2))
            / 4.0;
        assert!((b.l_loc - expected_loc).abs() < 1e-12);
        assert!((b.l_det - (b.l_cls + b.l_loc + b.l_obj)).abs() == 0.0);
    }

    #[test]
    fn additivity_holds_on_random_inputs() {
        let cfg = DetectorConfig::default();
        let mut rng = crate::rng::derive(3, 77, 0);
        for _ in 0..100 {
            let mut raw = RawPrediction::zeros(&cfg);
            for v in &mut raw.values.data {
                *v = rng.gen_range(-4.0..4.0);
            }
            let n = rng.gen_range(0..4);
            let labels: Vec<BoxLabel> = (0..n)
                .map(|_| {
                    let w = rng.gen_range(0.1..0.5);
                    let h = rng.gen_range(0.1..0.5);
                    label(
                        rng.gen_range(0..3),
                        rng.gen_range(w / 2.0..1.0 - w / 2.0),
                        rng.gen_range(h / 2.0..1.0 - h / 2.0),
                        w,
                        h,
                    )
                })
                .collect();
            let b = loss_det(&raw, &labels, &cfg).unwrap();
            assert_eq!(b.l_det, b.l_cls + b.l_loc + b.l_obj);
            assert!(b.l_cls >= 0.0 && b.l_loc >= 0.0 && b.l_obj >= 0.0);
        }
    }

    #[test]
    fn invalid_label_is_a_validation_error() {
        let cfg = DetectorConfig::default();
        let raw = RawPrediction::zeros(&cfg);
        let bad = label(0, 1.2, 0.5, 0.3, 0.3);
        assert!(matches!(
            loss_det(&raw, &[bad], &cfg),
            Err(crate::error::Error::Validation(_))
        ));
    }

    #[test]
    fn anchor_collision_falls_back_to_next_best() {
        let cfg = DetectorConfig::default();
        // Two equal boxes whose centers land in the same cell.
        let a = label(0, 0.51, 0.51, 0.3, 0.3);
        let b = label(1, 0.53, 0.53, 0.3, 0.3);
        let asg = assign_anchors(&[a, b], &cfg).unwrap();
        assert_eq!(asg.len(), 2);
        assert_eq!(asg[0].anchor, 1);
        assert_ne!(asg[1].anchor, 1);
    }
}
