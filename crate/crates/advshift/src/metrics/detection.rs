//! IoU, per-class average precision (VOC protocol, IoU 0.5) and mAP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::detector::{decode, nms, DetectorConfig, DetectorParams, RawPrediction};
use crate::error::{Error, Result};

/// Intersection-over-union of two `[cx, cy, w, h]` boxes. Degenerate boxes
/// have IoU 0.
pub fn iou_cxcywh(a: [f64; 4], b: [f64; 4]) -> f64 {
    if a[2] <= 0.0 || a[3] <= 0.0 || b[2] <= 0.0 || b[3] <= 0.0 {
        return 0.0;
    }
    let ax0 = a[0] - a[2] / 2.0;
    let ax1 = a[0] + a[2] / 2.0;
    let ay0 = a[1] - a[3] / 2.0;
    let ay1 = a[1] + a[3] / 2.0;
    let bx0 = b[0] - b[2] / 2.0;
    let bx1 = b[0] + b[2] / 2.0;
    let by0 = b[1] - b[3] / 2.0;
    let by1 = b[1] + b[3] / 2.0;
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    // areas from the same corner arithmetic as the intersection, so
    // identical boxes give exactly 1
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    inter / union
}

/// One class-filtered detection for AP computation.
#[derive(Debug, Clone, Copy)]
pub struct ScoredBox {
    pub image: usize,
    pub score: f64,
    pub bbox: [f64; 4],
}

/// One class-filtered ground-truth box.
#[derive(Debug, Clone, Copy)]
pub struct GtBox {
    pub image: usize,
    pub bbox: [f64; 4],
}

/// Per-detection match flags, in descending-score order.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// `(true, Some(gt_index))` for true positives, `(false, None)` for
    /// false positives.
    pub flags: Vec<(bool, Option<usize>)>,
    pub num_gt: usize,
}

/// Greedy score-ordered matching: each detection takes the highest-IoU
/// still-unmatched ground truth of its image, if that IoU reaches the
/// threshold. Each ground truth matches at most once.
pub fn match_detections(
    detections: &[ScoredBox],
    ground_truths: &[GtBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        detections[j]
            .score
            .partial_cmp(&detections[i].score)
            .unwrap()
            .then(detections[i].image.cmp(&detections[j].image))
            .then(i.cmp(&j))
    });
    let mut gt_used = vec![false; ground_truths.len()];
    let mut flags = Vec::with_capacity(detections.len());
    for &di in &order {
        let det = &detections[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truths.iter().enumerate() {
            if gt_used[gi] || gt.image != det.image {
                continue;
            }
            let v = iou_cxcywh(det.bbox, gt.bbox);
            if v >= iou_threshold && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                flags.push((true, Some(gi)));
            }
            None => flags.push((false, None)),
        }
    }
    MatchResult {
        flags,
        num_gt: ground_truths.len(),
    }
}

/// All-point-interpolated average precision at the given IoU threshold.
/// Returns `None` when the class has neither ground truths nor detections.
pub fn average_precision(
    detections: &[ScoredBox],
    ground_truths: &[GtBox],
    iou_threshold: f64,
) -> Option<f64> {
    if ground_truths.is_empty() {
        if detections.is_empty() {
            return None; // undefined, excluded from mAP
        }
        return Some(0.0);
    }
    if detections.is_empty() {
        return Some(0.0);
    }
    let matched = match_detections(detections, ground_truths, iou_threshold);
    let num_gt = matched.num_gt as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(matched.flags.len()); // (recall, precision)
    for &(is_tp, _) in &matched.flags {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / num_gt, tp as f64 / (tp + fp) as f64));
    }
    // monotone precision envelope, then area under the step curve
    let mut env = points.clone();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i].1 = env[i].1.max(env[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(r, p) in &env {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    Some(ap)
}

/// Arithmetic mean over classes with a defined AP.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        return Err(Error::Validation(
            "mAP undefined: no class has ground truths or detections".into(),
        ));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Decode/NMS settings used when evaluating a detector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub iou_threshold: f64,
    pub max_detections: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            score_threshold: 0.01,
            nms_iou: 0.45,
            iou_threshold: 0.5,
            max_detections: 100,
        }
    }
}

/// Forward + decode + NMS for one image.
pub fn detect_image(
    params: &DetectorParams,
    config: &DetectorConfig,
    image: &crate::image::Image,
    settings: &EvalSettings,
) -> Result<Vec<crate::detector::Detection>> {
    let trace = crate::detector::forward_trace(params, &image.pixels)?;
    let raw = RawPrediction::new(trace.raw().clone(), config);
    let mut dets = nms(&decode(&raw, config, settings.score_threshold), settings.nms_iou);
    dets.truncate(settings.max_detections);
    Ok(dets)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
}

/// Per-class AP at IoU 0.5 plus mAP over the whole dataset.
pub fn evaluate_detector(
    params: &DetectorParams,
    config: &DetectorConfig,
    dataset: &Dataset,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty dataset".into()));
    }
    let per_image: Vec<Result<Vec<crate::detector::Detection>>> = dataset
        .samples
        .par_iter()
        .map(|s| detect_image(params, config, &s.image, settings))
        .collect();

    let mut dets_by_class: Vec<Vec<ScoredBox>> = vec![Vec::new(); config.num_classes];
    let mut gts_by_class: Vec<Vec<GtBox>> = vec![Vec::new(); config.num_classes];
    for (img_idx, r) in per_image.into_iter().enumerate() {
        for d in r? {
            dets_by_class[d.class_id].push(ScoredBox {
                image: img_idx,
                score: d.score,
                bbox: d.bbox(),
            });
        }
        for l in &dataset.samples[img_idx].labels {
            gts_by_class[l.class_id].push(GtBox {
                image: img_idx,
                bbox: l.bbox(),
            });
        }
    }
    let per_class_ap: Vec<Option<f64>> = (0..config.num_classes)
        .map(|c| average_precision(&dets_by_class[c], &gts_by_class[c], settings.iou_threshold))
        .collect();
    let map = mean_ap(&per_class_ap)?;
    Ok(EvalReport { per_class_ap, map })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identities() {
        let a = [0.5, 0.5, 0.2, 0.2];
        assert_eq!(iou_cxcywh(a, a), 1.0);
        let b = [0.1, 0.1, 0.05, 0.05];
        assert_eq!(iou_cxcywh(a, b), 0.0);
        let degenerate = [0.5, 0.5, 0.0, 0.2];
        assert_eq!(iou_cxcywh(a, degenerate), 0.0);
    }

    #[test]
    fn iou_hand_case_one_seventh() {
        // corner boxes (0,0)-(2,2) and (1,1)-(3,3) in a 4-unit frame:
        // intersection 1, union 7
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [2.0, 2.0, 2.0, 2.0];
        assert!((iou_cxcywh(a, b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_single_detection_ap_is_one() {
        let gt = [GtBox {
            image: 0,
            bbox: [0.5, 0.5, 0.2, 0.2],
        }];
        let det = [ScoredBox {
            image: 0,
            score: 0.9,
            bbox: [0.5, 0.5, 0.2, 0.2],
        }];
        assert_eq!(average_precision(&det, &gt, 0.5), Some(1.0));
    }

    #[test]
    fn no_detections_ap_is_zero() {
        let gt = [GtBox {
            image: 0,
            bbox: [0.5, 0.5, 0.2, 0.2],
        }];
        assert_eq!(average_precision(&[], &gt, 0.5), Some(0.0));
        assert_eq!(average_precision(&[], &[], 0.5), None);
    }

    #[test]
    fn tp_fp_tp_hand_case_is_0_8333() {
        let gts = [
            GtBox {
                image: 0,
                bbox: [0.3, 0.3, 0.2, 0.2],
            },
            GtBox {
                image: 0,
                bbox: [0.7, 0.7, 0.2, 0.2],
            },
        ];
        let dets = [
            ScoredBox {
                image: 0,
                score: 0.9,
                bbox: [0.3, 0.3, 0.2, 0.2],
            },
            ScoredBox {
                image: 0,
                score: 0.8,
                bbox: [0.1, 0.9, 0.05, 0.05],
            },
            ScoredBox {
                image: 0,
                score: 0.7,
                bbox: [0.7, 0.7, 0.2, 0.2],
            },
        ];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert!((ap - (0.5 + 0.5 * (2.0 / 3.0))).abs() < 1e-12, "ap = {ap}");
    }

    #[test]
    fn mean_ap_rules() {
        assert_eq!(mean_ap(&[Some(0.7)]).unwrap(), 0.7);
        assert_eq!(mean_ap(&[Some(1.0), Some(0.0)]).unwrap(), 0.5);
        assert_eq!(mean_ap(&[Some(1.0), None, Some(0.0)]).unwrap(), 0.5);
        assert!(mean_ap(&[None, None]).is_err());
    }
}
