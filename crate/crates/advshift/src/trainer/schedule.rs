//! Linear warmup into cosine annealing.

use crate::trainer::config::TrainConfig;

/// Learning rate at a training progress fraction in [0, 1]: a linear ramp
/// from 0 to `lr_max` over the warmup epochs, then cosine annealing from
/// `lr_max` down to `lr_min`.
pub fn lr_schedule(epoch_fraction: f64, config: &TrainConfig) -> f64 {
    let f = epoch_fraction.clamp(0.0, 1.0);
    let warmup_frac = config.warmup_epochs as f64 / config.epochs as f64;
    if f < warmup_frac {
        return config.lr_max * (f / warmup_frac);
    }
    let s = if warmup_frac < 1.0 {
        (f - warmup_frac) / (1.0 - warmup_frac)
    } else {
        1.0
    };
    config.lr_min + (config.lr_max - config.lr_min) * (1.0 + (std::f64::consts::PI * s).cos()) / 2.0
}
