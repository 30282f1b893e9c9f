//! Planted high-frequency class cue.
//!
//! Each class owns a fixed 4x4 sign tile (mutually orthogonal patterns).
//! Inside every object box the tile is added at low amplitude: highly
//! predictive of the class, invisible at 4/255, and easy for a standard
//! trained model to latch onto. Along the shift axis the tile blends into a
//! per-object random tile, so at `beta = 1` (or with `nonrobust_present =
//! false`) the pattern carries no class information while keeping the same
//! pixel statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::AnnotatedSample;
use crate::datagen::style::DomainSpec;

pub const CUE_TILE: usize = 4;

/// Fixed sign tile for a class: checkerboard, vertical stripes, horizontal
/// stripes (orthogonal under the tile inner product).
pub fn class_tile(class_id: usize) -> [[f64; CUE_TILE]; CUE_TILE] {
    let mut tile = [[0.0; CUE_TILE]; CUE_TILE];
    for (y, row) in tile.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let bit = match class_id % 3 {
                0 => (x + y) % 2,
                1 => x % 2,
                _ => y % 2,
            };
            *v = if bit == 0 { 1.0 } else { -1.0 };
        }
    }
    tile
}

fn random_tile(rng: &mut ChaCha8Rng) -> [[f64; CUE_TILE]; CUE_TILE] {
    let mut tile = [[0.0; CUE_TILE]; CUE_TILE];
    for row in tile.iter_mut() {
        for v in row.iter_mut() {
            *v = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    tile
}

/// Pixel bounds of a label box: `(x0, y0, x1, y1)`, exclusive upper.
pub fn box_pixel_bounds(
    label: &crate::dataset::BoxLabel,
    width: usize,
    height: usize,
) -> (usize, usize, usize, usize) {
    let x0 = (((label.cx - label.w / 2.0) * width as f64).floor().max(0.0)) as usize;
    let y0 = (((label.cy - label.h / 2.0) * height as f64).floor().max(0.0)) as usize;
    let x1 = (((label.cx + label.w / 2.0) * width as f64).ceil() as usize).min(width);
    let y1 = (((label.cy + label.h / 2.0) * height as f64).ceil() as usize).min(height);
    (x0, y0, x1, y1)
}

/// Adds the cue pattern inside every labeled box, then clips to [0,1].
///
/// With `nonrobust_present` the effective tile is
/// `(1 - beta) * class_tile + beta * random_tile`; without it the tile is
/// purely random. Where boxes overlap, a pixel takes the cue of the first
/// box containing it, so the per-pixel change never exceeds the amplitude.
pub fn inject_nonrobust_cue(
    sample: &mut AnnotatedSample,
    domain: &DomainSpec,
    rng: &mut ChaCha8Rng,
) {
    let amp = domain.nonrobust_amplitude;
    let (height, width) = (sample.image.height(), sample.image.width());
    let mut claimed = vec![false; height * width];
    for label in sample.labels.clone() {
        let rnd = random_tile(rng);
        let cls = class_tile(label.class_id);
        let (x0, y0, x1, y1) = box_pixel_bounds(&label, width, height);
        if amp == 0.0 {
            continue;
        }
        for py in y0..y1 {
            for px in x0..x1 {
                if claimed[py * width + px] {
                    continue;
                }
                claimed[py * width + px] = true;
                let (ty, tx) = ((py - y0) % CUE_TILE, (px - x0) % CUE_TILE);
                let t = if domain.nonrobust_present {
                    (1.0 - domain.beta) * cls[ty][tx] + domain.beta * rnd[ty][tx]
                } else {
                    rnd[ty][tx]
                };
                for ch in 0..3 {
                    let v = sample.image.get(py, px, ch) + amp * t;
                    sample.image.set(py, px, ch, v.clamp(0.0, 1.0));
                }
            }
        }
    }
}
