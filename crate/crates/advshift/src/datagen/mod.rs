//! Synthetic two-domain dataset generator: shape-detection scenes with a
//! continuous shift knob and a planted class-correlated high-frequency cue
//! that only survives in the source domain.

pub mod cue;
pub mod generate;
pub mod scene;
pub mod style;

pub use cue::{class_tile, inject_nonrobust_cue, CUE_TILE};
pub use generate::{generate_dataset, generate_samples, DatasetManifest};
pub use scene::{class_shape, place_objects, render_scene, PlacedObject, SceneSpec, Shape};
pub use style::{DomainSpec, StyleParams, DEFAULT_CUE_AMPLITUDE, MAX_CUE_AMPLITUDE};
