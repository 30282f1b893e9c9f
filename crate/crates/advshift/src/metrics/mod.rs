//! Detection evaluation (IoU, AP, mAP) and Fréchet-distance shift
//! quantification.

pub mod detection;
pub mod frechet;
pub mod shift;

pub use detection::{
    average_precision, detect_image, evaluate_detector, iou_cxcywh, match_detections, mean_ap,
    EvalReport, EvalSettings, GtBox, MatchResult, ScoredBox,
};
pub use frechet::{extract_pooled_features, fit_gaussian, frechet_distance, FeatureStats};
pub use shift::{
    beta_sweep, default_beta_grid, shift_analysis, spearman, sweep_rows_to_csv, Calibration,
    Recommendation, ShiftReport, SweepRow, DEFAULT_FD_THRESHOLD,
};
