//! Raw-prediction decoding and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::detector::config::DetectorConfig;
use crate::detector::forward::RawPrediction;
use crate::metrics::iou_cxcywh;
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    /// objectness times class probability, in [0,1]
    pub score: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Detection {
    pub fn bbox(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }
}

/// YOLO-style decode: sigmoid cell offsets, exponential anchor scaling, one
/// candidate per anchor (its best class). Boxes are clipped to the unit
/// square; output is sorted by descending score.
pub fn decode(
    raw: &RawPrediction,
    config: &DetectorConfig,
    score_threshold: f64,
) -> Vec<Detection> {
    let s = config.grid_size;
    let mut out = Vec::new();
    for gy in 0..s {
        for gx in 0..s {
            for a in 0..config.num_anchors() {
                let obj = sigmoid(raw.at(gy, gx, a, 4));
                let mut best_c = 0usize;
                let mut best_p = f64::NEG_INFINITY;
                for c in 0..config.num_classes {
                    let p = sigmoid(raw.at(gy, gx, a, 5 + c));
                    if p > best_p {
                        best_p = p;
                        best_c = c;
                    }
                }
                let score = obj * best_p;
                if score < score_threshold {
                    continue;
                }
                let (aw, ah) = config.anchors[a];
                let cx = (gx as f64 + sigmoid(raw.at(gy, gx, a, 0))) / s as f64;
                let cy = (gy as f64 + sigmoid(raw.at(gy, gx, a, 1))) / s as f64;
                // clamp the exponent so a wild head cannot overflow
                let w = aw * raw.at(gy, gx, a, 2).min(8.0).exp();
                let h = ah * raw.at(gy, gx, a, 3).min(8.0).exp();
                // clip to the unit square via corners
                let x0 = (cx - w / 2.0).clamp(0.0, 1.0);
                let x1 = (cx + w / 2.0).clamp(0.0, 1.0);
                let y0 = (cy - h / 2.0).clamp(0.0, 1.0);
                let y1 = (cy + h / 2.0).clamp(0.0, 1.0);
                out.push(Detection {
                    class_id: best_c,
                    score,
                    cx: (x0 + x1) / 2.0,
                    cy: (y0 + y1) / 2.0,
                    w: x1 - x0,
                    h: y1 - y0,
                });
            }
        }
    }
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    out
}

/// Greedy per-class suppression: keeps the highest-scoring box of every
/// same-class cluster with IoU above `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        let suppressed = kept.iter().any(|k| {
            k.class_id == det.class_id && iou_cxcywh(k.bbox(), det.bbox()) > iou_threshold
        });
        if !suppressed {
            kept.push(*det);
        }
    }
    kept
}
