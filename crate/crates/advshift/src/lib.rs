//! Desk-scale study of adversarial training as a tool for unsupervised
//! domain adaptation in object detection.
//!
//! The crate bundles everything the experiment grid needs:
//!
//! - [`detector`]: a micro anchor-based detector, explicitly split into a
//!   feature stage F1 and a prediction head F2, with exact analytic
//!   gradients for both parameters and input pixels.
//! - [`perturb`]: zero/random-initialized FGSM, per-task variants with
//!   max-task selection, and PGD, all under an exact L-infinity projection.
//! - [`featalign`]: a per-location domain discriminator with least-squares
//!   alignment losses and a gradient reversal layer.
//! - [`datagen`]: a deterministic two-domain shape-detection dataset
//!   generator with a continuous shift knob and a planted class cue that is
//!   predictive only in the source domain.
//! - [`trainer`]: the four training modes (st, st-afl, at, at-afl) with the
//!   warmup + cosine SGD recipe, replicates and bit-exact checkpoints.
//! - [`metrics`]: VOC-style AP/mAP and the Fréchet distance over pooled
//!   detector features, plus the shift-strength sweep tying the two
//!   together.
//!
//! See the crate examples for runnable walk-throughs of each capability;
//! the `advshift` binary exposes the same flows as reproducible,
//! config-driven commands.

pub mod cli;
pub mod dataset;
pub mod datagen;
pub mod detector;
pub mod error;
pub mod featalign;
pub mod hashing;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod perturb;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
