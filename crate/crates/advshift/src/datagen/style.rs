//! Domain styling: palettes, backgrounds and the shift knob `beta`.

use serde::{Deserialize, Serialize};

use crate::dataset::DomainTag;
use crate::error::{Error, Result};

/// Largest admissible cue amplitude; anything bigger stops being a subtle
/// high-frequency pattern.
pub const MAX_CUE_AMPLITUDE: f64 = 8.0 / 255.0;

/// Default cue amplitude (4/255).
pub const DEFAULT_CUE_AMPLITUDE: f64 = 4.0 / 255.0;

/// Rendering style of one domain endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    /// Per-class fill colors. Within a domain the palette entries are close
    /// on purpose: color separates objects from background but barely
    /// separates classes, so class identity must come from geometry or from
    /// the planted cue.
    pub palette: Vec<[f64; 3]>,
    pub bg_base: [f64; 3],
    /// Uniform luminance noise amplitude.
    pub bg_noise: f64,
    /// Sinusoidal stripe amplitude and period (pixels).
    pub stripe_amp: f64,
    pub stripe_period: f64,
    pub stripe_diagonal: bool,
}

impl StyleParams {
    pub fn source_default() -> StyleParams {
        StyleParams {
            palette: vec![
                [0.80, 0.30, 0.25],
                [0.75, 0.33, 0.30],
                [0.78, 0.28, 0.33],
            ],
            bg_base: [0.92, 0.90, 0.86],
            bg_noise: 0.03,
            stripe_amp: 0.03,
            stripe_period: 8.0,
            stripe_diagonal: false,
        }
    }

    pub fn target_default() -> StyleParams {
        StyleParams {
            palette: vec![
                [0.72, 0.74, 0.28],
                [0.68, 0.70, 0.33],
                [0.75, 0.68, 0.25],
            ],
            bg_base: [0.38, 0.42, 0.52],
            bg_noise: 0.05,
            stripe_amp: 0.06,
            stripe_period: 5.0,
            stripe_diagonal: true,
        }
    }
}

/// Generative description of a synthetic domain. `beta` interpolates every
/// style parameter from the source endpoint (0) to the target endpoint (1);
/// the planted class cue degrades into a random pattern along the same axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    /// Shift strength in [0,1]; 0 is the source style.
    pub beta: f64,
    pub source_style: StyleParams,
    pub target_style: StyleParams,
    /// Amplitude of the class-correlated high-frequency cue.
    pub nonrobust_amplitude: f64,
    /// When false the cue pattern is class-uncorrelated at any `beta`,
    /// keeping pixel statistics matched.
    pub nonrobust_present: bool,
    pub tag: DomainTag,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::source()
    }
}

impl DomainSpec {
    pub fn source() -> DomainSpec {
        DomainSpec {
            beta: 0.0,
            source_style: StyleParams::source_default(),
            target_style: StyleParams::target_default(),
            nonrobust_amplitude: DEFAULT_CUE_AMPLITUDE,
            nonrobust_present: true,
            tag: DomainTag::Source,
        }
    }

    /// Fully shifted target domain: at `beta = 1` the cue blend is entirely
    /// random, so the source-only shortcut disappears.
    pub fn target() -> DomainSpec {
        DomainSpec {
            beta: 1.0,
            tag: DomainTag::Target,
            ..DomainSpec::source()
        }
    }

    /// Target domain at an intermediate shift strength.
    pub fn target_with_beta(beta: f64) -> DomainSpec {
        DomainSpec {
            beta,
            tag: DomainTag::Target,
            ..DomainSpec::source()
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0,1]", self.beta)));
        }
        if self.nonrobust_amplitude < 0.0 || self.nonrobust_amplitude > MAX_CUE_AMPLITUDE {
            return Err(Error::Config(format!(
                "nonrobust_amplitude {} outside [0, {MAX_CUE_AMPLITUDE}]",
                self.nonrobust_amplitude
            )));
        }
        for style in [&self.source_style, &self.target_style] {
            if style.palette.len() < num_classes {
                return Err(Error::Config(format!(
                    "palette has {} colors, need {}",
                    style.palette.len(),
                    num_classes
                )));
            }
            if style.stripe_period <= 0.0 {
                return Err(Error::Config("stripe period must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn fill_color(&self, class_id: usize) -> [f64; 3] {
        let s = self.source_style.palette[class_id];
        let t = self.target_style.palette[class_id];
        lerp3(s, t, self.beta)
    }

    pub fn bg_base(&self) -> [f64; 3] {
        lerp3(self.source_style.bg_base, self.target_style.bg_base, self.beta)
    }

    pub fn bg_noise(&self) -> f64 {
        lerp(self.source_style.bg_noise, self.target_style.bg_noise, self.beta)
    }

    /// Brightness offset of the blended stripe patterns at a pixel.
    pub fn stripes_at(&self, x: f64, y: f64) -> f64 {
        let s = &self.source_style;
        let t = &self.target_style;
        let phase = |st: &StyleParams| {
            let coord = if st.stripe_diagonal { x + y } else { y };
            (std::f64::consts::TAU * coord / st.stripe_period).sin()
        };
        (1.0 - self.beta) * s.stripe_amp * phase(s) + self.beta * t.stripe_amp * phase(t)
    }
}

pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact at both endpoints
    a * (1.0 - t) + b * t
}

pub fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        lerp(a[0], b[0], t),
        lerp(a[1], b[1], t),
        lerp(a[2], b[2], t),
    ]
}
