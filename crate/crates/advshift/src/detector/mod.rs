//! Micro single-scale anchor-based detector with an explicit `F2 ∘ F1`
//! split, exact gradients, decoding and NMS.

pub mod backward;
pub mod config;
pub mod decode;
pub mod forward;
pub mod loss;
pub mod params;

pub use backward::{backprop_f1, backprop_f2, input_gradient, param_gradients, sample_gradients};
pub use config::DetectorConfig;
pub use decode::{decode, nms, Detection};
pub use forward::{forward, forward_f1, forward_trace, FeatureMap, ForwardTrace, RawPrediction};
pub use loss::{assign_anchors, loss_det, loss_with_grad, Assignment, LossBreakdown, TaskLoss};
pub use params::{DetectorParams, LayerSpec, NetLayout};
