//! Domain-shift quantification and the shift-strength sweep.
//!
//! The Fréchet distance between pooled F1 features of the source training
//! set and a target test set predicts whether adversarial training will
//! help: large distances favor it, small distances favor standard training.
//! The decision threshold is calibrated on the synthetic sweep (the
//! distance at which the measured mAP ratio crosses 1), with an
//! "uncertain" band of +/-20% around it; thresholds are calibration-local
//! because they depend on the feature extractor.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::datagen::{generate_samples, DomainSpec, SceneSpec};
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::detection::{evaluate_detector, EvalSettings};
use crate::metrics::frechet::{extract_pooled_features, fit_gaussian, frechet_distance};
use crate::trainer::{run_replicates, TrainConfig};

/// Decision threshold measured on the default synthetic beta sweep: the FD
/// at which the AT/ST mAP ratio crosses 1.
pub const DEFAULT_FD_THRESHOLD: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fd_threshold: f64,
    /// Fractional width of the uncertain band around the threshold.
    pub band: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            fd_threshold: DEFAULT_FD_THRESHOLD,
            band: 0.2,
        }
    }
}

impl Calibration {
    /// Threshold from sweep rows: the FD where the ratio first crosses 1,
    /// linearly interpolated between the bracketing grid points.
    pub fn from_sweep(rows: &[SweepRow]) -> Option<Calibration> {
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.ratio < 1.0 && b.ratio >= 1.0 {
                let t = (1.0 - a.ratio) / (b.ratio - a.ratio);
                return Some(Calibration {
                    fd_threshold: a.fd + t * (b.fd - a.fd),
                    band: 0.2,
                });
            }
        }
        if rows.first().map(|r| r.ratio >= 1.0).unwrap_or(false) {
            return Some(Calibration {
                fd_threshold: rows[0].fd,
                band: 0.2,
            });
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    AdversarialTraining,
    StandardTraining,
    Uncertain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftReport {
    pub fd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_st: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_ratio: Option<f64>,
    pub recommendation: Recommendation,
    pub fd_threshold: f64,
    pub band: f64,
}

/// FD between two image sets through a frozen extractor, the AT/ST mAP
/// ratio when both values are supplied, and a train-mode recommendation.
pub fn shift_analysis(
    extractor: &DetectorParams,
    source_images: &[&Image],
    target_images: &[&Image],
    map_st: Option<f64>,
    map_at: Option<f64>,
    calibration: Option<Calibration>,
) -> Result<ShiftReport> {
    if source_images.len() < 2 || target_images.len() < 2 {
        return Err(Error::Validation(
            "shift analysis needs at least 2 images per side".into(),
        ));
    }
    let calib = calibration.unwrap_or_default();
    let fa = fit_gaussian(&extract_pooled_features(extractor, source_images)?)?;
    let fb = fit_gaussian(&extract_pooled_features(extractor, target_images)?)?;
    let fd = frechet_distance(&fa, &fb)?;
    // the ratio is only defined when the ST baseline is positive
    let map_ratio = match (map_st, map_at) {
        (Some(st), Some(at)) if st > 0.0 => Some(at / st),
        _ => None,
    };
    let lo = calib.fd_threshold * (1.0 - calib.band);
    let hi = calib.fd_threshold * (1.0 + calib.band);
    let recommendation = if fd > hi {
        Recommendation::AdversarialTraining
    } else if fd < lo {
        Recommendation::StandardTraining
    } else {
        Recommendation::Uncertain
    };
    Ok(ShiftReport {
        fd,
        map_st,
        map_at,
        map_ratio,
        recommendation,
        fd_threshold: calib.fd_threshold,
        band: calib.band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub fd: f64,
    pub map_st: f64,
    pub map_at: f64,
    pub ratio: f64,
}

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,fd,map_st,map_at,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.beta, r.fd, r.map_st, r.map_at, r.ratio
        ));
    }
    out
}

/// The default 11-point shift grid, 0.0 to 1.0 in steps of 0.1.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Trains ST and AT once on a generated source training set, then for every
/// `beta`: renders the stylized test set (same scene content, shifted
/// style), measures FD against the source training set through the frozen
/// ST-run-0 extractor, and evaluates both models. Replicate means are used
/// for the mAPs.
pub fn beta_sweep(
    scene: &SceneSpec,
    betas: &[f64],
    st_config: &TrainConfig,
    at_config: &TrainConfig,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::Config("beta grid must lie in [0,1]".into()));
    }
    let source_domain = DomainSpec::source();
    let train_samples = generate_samples(scene, &source_domain, train_count, seed)?;
    let source_train = Dataset::from_samples(train_samples);
    let test_seed = seed.wrapping_add(0x5eed);

    let st_runs = run_replicates(st_config, &source_train, None)?;
    let at_runs = run_replicates(at_config, &source_train, None)?;
    let extractor = st_runs[0].params();

    let source_images: Vec<&Image> = source_train.samples.iter().map(|s| &s.image).collect();
    let source_stats = fit_gaussian(&extract_pooled_features(extractor, &source_images)?)?;

    let settings = EvalSettings::default();
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let domain = DomainSpec::target_with_beta(beta);
        let test = Dataset::from_samples(generate_samples(scene, &domain, test_count, test_seed)?);
        let test_images: Vec<&Image> = test.samples.iter().map(|s| &s.image).collect();
        let test_stats = fit_gaussian(&extract_pooled_features(extractor, &test_images)?)?;
        let fd = frechet_distance(&source_stats, &test_stats)?;
        let mean_map = |runs: &[crate::trainer::TrainOutcome]| -> Result<f64> {
            let mut acc = 0.0;
            for r in runs {
                acc += evaluate_detector(r.params(), &st_config.detector, &test, &settings)?.map;
            }
            Ok(acc / runs.len() as f64)
        };
        let map_st = mean_map(&st_runs)?;
        let map_at = mean_map(&at_runs)?;
        rows.push(SweepRow {
            beta,
            fd,
            map_st,
            map_at,
            ratio: if map_st > 0.0 { map_at / map_st } else { f64::NAN },
        });
    }
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                ranks[idx[k]] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}
