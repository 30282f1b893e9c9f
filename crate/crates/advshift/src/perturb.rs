//! Adversarial perturbation generation under an L-infinity budget.
//!
//! Attacks are pure functions of `(params, sample, spec, seed)` and are
//! generated per sample. The perturbed image consumed downstream is always
//! `clip01(x + delta)`; attack-internal forward passes use the raw sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedSample;
use crate::detector::{input_gradient, loss_det, DetectorConfig, DetectorParams, TaskLoss};
use crate::detector::{forward_trace, RawPrediction};
use crate::error::{Error, Result};
use crate::nn::sign3;
use crate::rng::{derive, STREAM_ATTACK};
use crate::tensor::Tensor3;

pub const EPSILON_1_255: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    FgsmZero,
    FgsmRandom,
    Pgd,
    None,
}

/// Loss used to drive the attack: a single task loss, the full detection
/// loss, or max-task selection over the three per-task perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackLoss {
    Det,
    Cls,
    Loc,
    Obj,
    Mtl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub method: AttackMethod,
    /// L-infinity budget in pixel units ([0,1] scale).
    pub epsilon: f64,
    /// PGD iteration count.
    pub steps: usize,
    /// PGD step size; the usual recipe is `1.5 * epsilon / steps`.
    pub step_size: f64,
    pub loss_selector: AttackLoss,
    /// Base seed for random initialization.
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            method: AttackMethod::FgsmZero,
            epsilon: EPSILON_1_255,
            steps: 10,
            step_size: 1.5 * EPSILON_1_255 / 10.0,
            loss_selector: AttackLoss::Det,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            method: AttackMethod::None,
            epsilon: 0.0,
            ..Default::default()
        }
    }

    /// The 10-step PGD recipe with step size `1.5 * epsilon / 10`.
    pub fn pgd(epsilon: f64) -> Self {
        PerturbationSpec {
            method: AttackMethod::Pgd,
            epsilon,
            steps: 10,
            step_size: 1.5 * epsilon / 10.0,
            ..Default::default()
        }
    }

    pub fn fgsm_zero(epsilon: f64) -> Self {
        PerturbationSpec {
            method: AttackMethod::FgsmZero,
            epsilon,
            ..Default::default()
        }
    }

    pub fn fgsm_random(epsilon: f64, seed: u64) -> Self {
        PerturbationSpec {
            method: AttackMethod::FgsmRandom,
            epsilon,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be >= 0".into()));
        }
        if self.method == AttackMethod::Pgd && (self.steps < 1 || self.step_size <= 0.0) {
            return Err(Error::Config(
                "pgd requires steps >= 1 and step_size > 0".into(),
            ));
        }
        Ok(())
    }
}

/// An additive input perturbation with `max |delta| <= epsilon` of the
/// producing spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub delta: Tensor3,
}

impl Perturbation {
    pub fn zeros_like(image: &crate::image::Image) -> Perturbation {
        Perturbation {
            delta: Tensor3::zeros(3, image.height(), image.width()),
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.delta.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Elementwise clamp onto the L-infinity epsilon-ball. Idempotent.
pub fn project_linf(mut delta: Tensor3, epsilon: f64) -> Tensor3 {
    for v in &mut delta.data {
        *v = v.clamp(-epsilon, epsilon);
    }
    delta
}

fn require_labels(sample: &AnnotatedSample) -> Result<()> {
    if sample.labels.is_empty() {
        return Err(Error::Validation(
            "adversarial loss undefined for an unlabeled sample".into(),
        ));
    }
    Ok(())
}

fn task_of(selector: AttackLoss) -> TaskLoss {
    match selector {
        AttackLoss::Det => TaskLoss::Det,
        AttackLoss::Cls => TaskLoss::Cls,
        AttackLoss::Loc => TaskLoss::Loc,
        AttackLoss::Obj => TaskLoss::Obj,
        AttackLoss::Mtl => TaskLoss::Det, // mtl selects among per-task deltas
    }
}

fn random_init(spec: &PerturbationSpec, image: &crate::image::Image, stream_index: u64) -> Tensor3 {
    let mut delta = Tensor3::zeros(3, image.height(), image.width());
    if spec.method == AttackMethod::FgsmRandom && spec.epsilon > 0.0 {
        let mut rng = derive(spec.seed, STREAM_ATTACK, stream_index);
        for v in &mut delta.data {
            *v = rng.gen_range(-spec.epsilon..=spec.epsilon);
        }
    }
    delta
}

/// Raw (unclipped) sum `x + delta` used inside attack gradient evaluations.
fn add_delta(image: &crate::image::Image, delta: &Tensor3) -> crate::image::Image {
    let data: Vec<f64> = image
        .pixels
        .data
        .iter()
        .zip(&delta.data)
        .map(|(&x, &d)| x + d)
        .collect();
    crate::image::Image {
        pixels: Tensor3::from_vec(3, image.height(), image.width(), data),
    }
}

/// Single signed-gradient step from `delta0`, projected onto the epsilon
/// ball. With zero init every entry lands in `{-eps, 0, +eps}`.
fn fgsm_step(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    delta0: &Tensor3,
    task: TaskLoss,
    epsilon: f64,
    step: f64,
) -> Result<Tensor3> {
    let at = add_delta(&sample.image, delta0);
    let grad = input_gradient(params, config, &at, &sample.labels, task)?;
    let mut delta = delta0.clone();
    for (d, g) in delta.data.iter_mut().zip(&grad.data) {
        *d += step * sign3(*g);
    }
    Ok(project_linf(delta, epsilon))
}

/// Zero- or random-initialized FGSM driven by the spec's loss selector
/// (`mtl` resolves through [`select_mtl`]).
pub fn fgsm(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    spec: &PerturbationSpec,
    stream_index: u64,
) -> Result<Perturbation> {
    spec.validate()?;
    require_labels(sample)?;
    if spec.loss_selector == AttackLoss::Mtl {
        let candidates = per_task_deltas(params, config, sample, spec, stream_index)?;
        return select_mtl(params, config, sample, candidates);
    }
    let delta0 = random_init(spec, &sample.image, stream_index);
    let delta = fgsm_step(
        params,
        config,
        sample,
        &delta0,
        task_of(spec.loss_selector),
        spec.epsilon,
        spec.epsilon,
    )?;
    Ok(Perturbation { delta })
}

/// Per-task FGSM perturbations for cls, loc and obj. Empty-label samples
/// are fine here: a zero task gradient yields the projected init.
pub fn per_task_deltas(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    spec: &PerturbationSpec,
    stream_index: u64,
) -> Result<[Perturbation; 3]> {
    spec.validate()?;
    let delta0 = random_init(spec, &sample.image, stream_index);
    let mk = |task: TaskLoss| -> Result<Perturbation> {
        Ok(Perturbation {
            delta: fgsm_step(params, config, sample, &delta0, task, spec.epsilon, spec.epsilon)?,
        })
    };
    Ok([mk(TaskLoss::Cls)?, mk(TaskLoss::Loc)?, mk(TaskLoss::Obj)?])
}

/// Detection loss at the applied (clipped) perturbed input.
pub fn applied_loss_det(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    delta: &Tensor3,
) -> Result<f64> {
    let image = sample.image.perturbed(delta);
    let trace = forward_trace(params, &image.pixels)?;
    let raw = RawPrediction::new(trace.raw().clone(), config);
    Ok(loss_det(&raw, &sample.labels, config)?.l_det)
}

/// Max-task selection: the candidate maximizing the full detection loss.
/// Ties keep the earliest candidate (cls, loc, obj order).
pub fn select_mtl(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    candidates: [Perturbation; 3],
) -> Result<Perturbation> {
    let mut best_idx = 0usize;
    let mut best_loss = f64::NEG_INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        let l = applied_loss_det(params, config, sample, &cand.delta)?;
        if l > best_loss {
            best_loss = l;
            best_idx = i;
        }
    }
    let [cls, loc, obj] = candidates;
    Ok(match best_idx {
        0 => cls,
        1 => loc,
        _ => obj,
    })
}

/// Projected gradient descent: zero-initialized signed-gradient ascent with
/// projection after every step. `steps = 1, step_size = epsilon` reproduces
/// zero-initialized FGSM bitwise.
pub fn pgd(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    spec: &PerturbationSpec,
) -> Result<Perturbation> {
    spec.validate()?;
    require_labels(sample)?;
    let task = task_of(spec.loss_selector);
    let mut delta = Tensor3::zeros(3, sample.image.height(), sample.image.width());
    for _ in 0..spec.steps {
        delta = fgsm_step(params, config, sample, &delta, task, spec.epsilon, spec.step_size)?;
        debug_assert!(delta.data.iter().all(|v| v.abs() <= spec.epsilon));
    }
    Ok(Perturbation { delta })
}

/// Attack entry point used by the trainer: dispatches on the spec's method.
/// `stream_index` keys the random init per sample.
pub fn generate(
    params: &DetectorParams,
    config: &DetectorConfig,
    sample: &AnnotatedSample,
    spec: &PerturbationSpec,
    stream_index: u64,
) -> Result<Perturbation> {
    match spec.method {
        AttackMethod::None => Ok(Perturbation::zeros_like(&sample.image)),
        AttackMethod::FgsmZero | AttackMethod::FgsmRandom => {
            fgsm(params, config, sample, spec, stream_index)
        }
        AttackMethod::Pgd => {
            if spec.loss_selector == AttackLoss::Mtl {
                return Err(Error::Config(
                    "mtl selection is defined for single-step attacks".into(),
                ));
            }
            pgd(params, config, sample, spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BoxLabel, DomainTag};
    use rand::Rng;

    fn sample(seed: u64) -> AnnotatedSample {
        let mut rng = crate::rng::derive(seed, 109, 0);
        let mut image = crate::image::Image::new(32, 32);
        for v in &mut image.pixels.data {
            *v = rng.gen_range(0.0..1.0);
        }
        AnnotatedSample {
            image,
            labels: vec![BoxLabel {
                class_id: 1,
                cx: 0.4,
                cy: 0.6,
                w: 0.3,
                h: 0.3,
            }],
            domain: DomainTag::Source,
        }
    }

    fn setup() -> (DetectorConfig, DetectorParams) {
        let cfg = DetectorConfig::small();
        let params = DetectorParams::init(&cfg, 33).unwrap();
        (cfg, params)
    }

    #[test]
    fn projection_is_a_clamp_and_idempotent() {
        let d = Tensor3::from_vec(1, 1, 3, vec![0.7, -0.2, 0.5]);
        let p = project_linf(d, 0.5);
        assert_eq!(p.data, vec![0.5, -0.2, 0.5]);
        let pp = project_linf(p.clone(), 0.5);
        assert_eq!(p, pp);
    }

    #[test]
    fn zero_epsilon_gives_zero_perturbation() {
        let (cfg, params) = setup();
        let s = sample(1);
        let spec = PerturbationSpec::fgsm_zero(0.0);
        let p = fgsm(&params, &cfg, &s, &spec, 0).unwrap();
        assert!(p.delta.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fgsm_zero_entries_are_three_valued() {
        let (cfg, params) = setup();
        let eps = 2.0 / 255.0;
        for i in 0..3u64 {
            let s = sample(10 + i);
            let p = fgsm(&params, &cfg, &s, &PerturbationSpec::fgsm_zero(eps), i).unwrap();
            assert!(p
                .delta
                .data
                .iter()
                .all(|&v| v == eps || v == -eps || v == 0.0));
            assert!(p.linf_norm() <= eps);
        }
    }

    #[test]
    fn pgd_one_step_equals_fgsm_zero_bitwise() {
        let (cfg, params) = setup();
        let s = sample(2);
        let eps = 2.0 / 255.0;
        let f = fgsm(&params, &cfg, &s, &PerturbationSpec::fgsm_zero(eps), 0).unwrap();
        let mut spec = PerturbationSpec::pgd(eps);
        spec.steps = 1;
        spec.step_size = eps;
        let p = pgd(&params, &cfg, &s, &spec).unwrap();
        assert_eq!(f.delta.data, p.delta.data);
    }

    #[test]
    fn random_init_is_seed_reproducible() {
        let (cfg, params) = setup();
        let s = sample(3);
        let spec = PerturbationSpec::fgsm_random(2.0 / 255.0, 77);
        let a = fgsm(&params, &cfg, &s, &spec, 5).unwrap();
        let b = fgsm(&params, &cfg, &s, &spec, 5).unwrap();
        let c = fgsm(&params, &cfg, &s, &spec, 6).unwrap();
        assert_eq!(a.delta.data, b.delta.data);
        assert_ne!(a.delta.data, c.delta.data);
        assert!(a.linf_norm() <= spec.epsilon + 1e-15);
    }

    #[test]
    fn unlabeled_sample_is_an_error_for_fgsm_and_pgd() {
        let (cfg, params) = setup();
        let mut s = sample(4);
        s.labels.clear();
        let spec = PerturbationSpec::fgsm_zero(EPSILON_1_255);
        assert!(fgsm(&params, &cfg, &s, &spec, 0).is_err());
        assert!(pgd(&params, &cfg, &s, &PerturbationSpec::pgd(EPSILON_1_255)).is_err());
    }

    #[test]
    fn per_task_on_empty_labels_gives_projected_init() {
        let (cfg, params) = setup();
        let mut s = sample(5);
        s.labels.clear();
        // cls and loc losses are identically zero without positives, so the
        // perturbation is the (zero) init.
        let spec = PerturbationSpec::fgsm_zero(EPSILON_1_255);
        let [cls, loc, obj] = per_task_deltas(&params, &cfg, &s, &spec, 0).unwrap();
        assert!(cls.delta.data.iter().all(|&v| v == 0.0));
        assert!(loc.delta.data.iter().all(|&v| v == 0.0));
        // obj loss exists (all negatives); its delta may be nonzero
        assert!(obj.linf_norm() <= spec.epsilon);
    }

    #[test]
    fn mtl_selection_matches_exhaustive_evaluation() {
        let (cfg, params) = setup();
        let spec = PerturbationSpec::fgsm_zero(2.0 / 255.0);
        for i in 0..10u64 {
            let s = sample(20 + i);
            let cands = per_task_deltas(&params, &cfg, &s, &spec, i).unwrap();
            let losses: Vec<f64> = cands
                .iter()
                .map(|c| applied_loss_det(&params, &cfg, &s, &c.delta).unwrap())
                .collect();
            let picked = select_mtl(&params, &cfg, &s, cands.clone()).unwrap();
            let picked_loss = applied_loss_det(&params, &cfg, &s, &picked.delta).unwrap();
            let best = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(picked_loss, best);
            // argmax definition: at least as good as every candidate
            for l in losses {
                assert!(picked_loss >= l);
            }
        }
    }

    #[test]
    fn mtl_tie_keeps_first_candidate() {
        let (cfg, params) = setup();
        let s = sample(6);
        let zero = Perturbation::zeros_like(&s.image);
        let picked =
            select_mtl(&params, &cfg, &s, [zero.clone(), zero.clone(), zero.clone()]).unwrap();
        assert_eq!(picked.delta.data, zero.delta.data);
    }

    #[test]
    fn sum_of_task_signs_can_differ_from_single_task_sign() {
        // two-component counterexample: g_cls = (1, -1), g_loc = (-2, -1)
        // sign(g_cls + g_loc) = (-1, -1) != sign(g_cls) = (1, -1)
        let g_cls = [1.0, -1.0];
        let g_loc = [-2.0, -1.0];
        let summed: Vec<f64> = g_cls
            .iter()
            .zip(&g_loc)
            .map(|(a, b)| sign3(a + b))
            .collect();
        let single: Vec<f64> = g_cls.iter().map(|&v| sign3(v)).collect();
        assert_ne!(summed, single);
        assert_eq!(summed[1], single[1]);
    }
}
