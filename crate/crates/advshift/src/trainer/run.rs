//! The training loop for all four modes.
//!
//! Per batch: (1) per-sample adversarial perturbations are generated with
//! the parameters frozen at the batch start; (2) the perturbed source batch
//! flows through the detector for the detection loss; (3) under feature
//! alignment the perturbed-source and clean-target F1 features additionally
//! flow through the domain discriminator, with F1 gradients routed through
//! the gradient reversal layer; (4) one optimizer step updates everything.
//!
//! Determinism: data order, attack randomness and flips are keyed by
//! `(seed, epoch, sample index)`, and batch reductions run in index order,
//! so results do not depend on worker count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{AnnotatedSample, Dataset, UnlabeledSet};
use crate::detector::{
    backprop_f1, backprop_f2, forward_f1, forward_trace, loss_with_grad, DetectorParams,
    LossBreakdown, RawPrediction, TaskLoss,
};
use crate::error::{Error, Result};
use crate::featalign::{
    afl_backward, afl_loss_source, afl_loss_target, discriminate_trace, grl_backward,
    DiscriminatorParams, DomainSide,
};
use crate::hashing::sha256_hex;
use crate::image::Image;
use crate::perturb;
use crate::rng::{derive, STREAM_FLIP, STREAM_SHUFFLE};
use crate::trainer::config::TrainConfig;
use crate::trainer::schedule::lr_schedule;
use crate::trainer::sgd::sgd_step;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub l_det: f64,
    pub l_cls: f64,
    pub l_loc: f64,
    pub l_obj: f64,
    pub l_afl_s: Option<f64>,
    pub l_afl_t: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str =
        "epoch,lr,l_det,l_cls,l_loc,l_obj,l_afl_s,l_afl_t,wall_time_s";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.lr,
                e.l_det,
                e.l_cls,
                e.l_loc,
                e.l_obj,
                opt(e.l_afl_s),
                opt(e.l_afl_t),
                e.wall_time_s
            ));
        }
        out
    }
}

/// Everything mutable across batches; the unit a checkpoint captures.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: DetectorParams,
    pub disc: Option<DiscriminatorParams>,
    pub velocity: Vec<f64>,
    pub disc_velocity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: TrainHistory,
    pub seed: u64,
}

impl TrainOutcome {
    pub fn params(&self) -> &DetectorParams {
        &self.state.params
    }
}

pub fn config_hash(config: &TrainConfig) -> String {
    sha256_hex(
        serde_json::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    )
}

fn flip_sample(sample: &AnnotatedSample) -> AnnotatedSample {
    let (h, w) = (sample.image.height(), sample.image.width());
    let mut flipped = Image::new(h, w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                flipped.set(y, x, ch, sample.image.get(y, w - 1 - x, ch));
            }
        }
    }
    let labels = sample
        .labels
        .iter()
        .map(|l| crate::dataset::BoxLabel {
            cx: 1.0 - l.cx,
            ..*l
        })
        .collect();
    AnnotatedSample {
        image: flipped,
        labels,
        domain: sample.domain,
    }
}

struct SourceOut {
    losses: LossBreakdown,
    grads: Vec<f64>,
    disc_grads: Option<Vec<f64>>,
    afl_s: Option<f64>,
}

struct TargetOut {
    f1_grads: Vec<f64>,
    disc_grads: Vec<f64>,
    afl_t: f64,
}

fn validate_datasets(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
) -> Result<()> {
    config.validate(target.is_some())?;
    if source.is_empty() {
        return Err(Error::Validation("source dataset is empty".into()));
    }
    let (h, w) = config.detector.input_resolution;
    let img = &source.samples[0].image;
    if img.height() != h || img.width() != w {
        return Err(Error::Config(format!(
            "source images are {}x{}, detector expects {}x{}",
            img.height(),
            img.width(),
            h,
            w
        )));
    }
    if let Some(t) = target {
        if config.mode.uses_afl() && t.images.is_empty() {
            return Err(Error::Validation("target dataset is empty".into()));
        }
    }
    Ok(())
}

pub fn initial_state(config: &TrainConfig) -> Result<TrainState> {
    let params = DetectorParams::init(&config.detector, config.seed)?;
    let velocity = vec![0.0; params.layout.total_params];
    let (disc, disc_velocity) = if config.mode.uses_afl() {
        let d = DiscriminatorParams::init(params.feature_channels(), config.seed);
        let v = vec![0.0; d.data.len()];
        (Some(d), v)
    } else {
        (None, Vec::new())
    };
    Ok(TrainState {
        params,
        disc,
        velocity,
        disc_velocity,
    })
}

/// Train from a fresh initialization.
pub fn train(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
) -> Result<TrainOutcome> {
    validate_datasets(config, source, target)?;
    let state = initial_state(config)?;
    train_epochs(config, source, target, state, 0)
}

/// Continue training from a restored state; used by checkpoint resume.
pub fn train_epochs(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
    state: TrainState,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    train_epoch_range(config, source, target, state, start_epoch, config.epochs)
}

/// Trains epochs `[start_epoch, end_epoch)` of the configured schedule.
/// Stopping before `config.epochs` models an interrupted run: the learning
/// rate schedule is always that of the full configuration.
pub fn train_epoch_range(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
    mut state: TrainState,
    start_epoch: usize,
    end_epoch: usize,
) -> Result<TrainOutcome> {
    validate_datasets(config, source, target)?;
    if end_epoch > config.epochs {
        return Err(Error::Config(format!(
            "end epoch {} exceeds configured epochs {}",
            end_epoch, config.epochs
        )));
    }
    let det_cfg = &config.detector;
    let afl = config.mode.uses_afl();
    let lambda = config.alignment.lambda;
    let spec = config.effective_perturbation();
    let n = source.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut history = TrainHistory::default();

    for epoch in start_epoch..end_epoch {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut derive(config.seed, STREAM_SHUFFLE, epoch as u64));
        let target_order: Vec<usize> = if afl {
            let t_len = target.map(|t| t.images.len()).unwrap_or(0);
            let mut idx: Vec<usize> = (0..t_len).collect();
            idx.shuffle(&mut derive(
                config.seed,
                STREAM_SHUFFLE,
                (1u64 << 32) | epoch as u64,
            ));
            idx
        } else {
            Vec::new()
        };
        let mut tpos = 0usize;

        let mut epoch_lr = 0.0;
        let mut sums = LossBreakdown::zero();
        let mut afl_s_sum = 0.0;
        let mut afl_t_sum = 0.0;
        let mut afl_t_count = 0usize;

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let step = epoch * steps_per_epoch + batch_idx;
            let frac = if total_steps > 1 {
                step as f64 / (total_steps - 1) as f64
            } else {
                1.0
            };
            let lr = lr_schedule(frac, config);
            if batch_idx == 0 {
                epoch_lr = lr;
            }

            let params = &state.params;
            let disc = state.disc.as_ref();
            let outs: Vec<Result<SourceOut>> = chunk
                .par_iter()
                .map(|&ds_idx| {
                    let stored = &source.samples[ds_idx];
                    let flipped;
                    let sample: &AnnotatedSample = if config.horizontal_flip {
                        let key = (epoch as u64) * n as u64 + ds_idx as u64;
                        if derive(config.seed, STREAM_FLIP, key).gen_bool(0.5) {
                            flipped = flip_sample(stored);
                            &flipped
                        } else {
                            stored
                        }
                    } else {
                        stored
                    };
                    let attack_key = (epoch as u64) * n as u64 + ds_idx as u64;
                    let delta = perturb::generate(params, det_cfg, sample, &spec, attack_key)?;
                    let x = sample.image.perturbed(&delta.delta);
                    let trace = forward_trace(params, &x.pixels)?;
                    let raw = RawPrediction::new(trace.raw().clone(), det_cfg);
                    let (losses, d_raw) =
                        loss_with_grad(&raw, &sample.labels, det_cfg, Some(TaskLoss::Det))?;
                    let mut grads = vec![0.0; params.layout.total_params];
                    let mut d_feat =
                        backprop_f2(params, &trace, d_raw.expect("grad requested"), &mut grads);
                    let (disc_grads, afl_s) = if afl {
                        let d = disc.expect("discriminator in afl mode");
                        let feat = trace.feature_map(params);
                        let (map, dtrace) = discriminate_trace(d, feat)?;
                        let l_s = afl_loss_source(&map);
                        let (dg, dfeat_afl) = afl_backward(d, feat, &dtrace, DomainSide::Source);
                        let reversed = grl_backward(&dfeat_afl, lambda);
                        for (acc, v) in d_feat.data.iter_mut().zip(&reversed.data) {
                            *acc += v;
                        }
                        (Some(dg), Some(l_s))
                    } else {
                        (None, None)
                    };
                    backprop_f1(params, &x.pixels, &trace, d_feat, &mut grads);
                    Ok(SourceOut {
                        losses,
                        grads,
                        disc_grads,
                        afl_s,
                    })
                })
                .collect();

            let t_outs: Vec<Result<TargetOut>> = if afl {
                let t = target.expect("target in afl mode");
                let d = disc.expect("discriminator in afl mode");
                let t_len = t.images.len();
                let picks: Vec<usize> = (0..config.target_batch_size)
                    .map(|k| target_order[(tpos + k) % t_len])
                    .collect();
                tpos = (tpos + config.target_batch_size) % t_len;
                picks
                    .par_iter()
                    .map(|&ti| {
                        let img = t.images[ti];
                        let trace = forward_f1(params, &img.pixels)?;
                        let feat = trace.activations.last().expect("f1 output");
                        let (map, dtrace) = discriminate_trace(d, feat)?;
                        let l_t = afl_loss_target(&map);
                        let (dg, dfeat_afl) = afl_backward(d, feat, &dtrace, DomainSide::Target);
                        let reversed = grl_backward(&dfeat_afl, lambda);
                        let mut grads = vec![0.0; params.layout.total_params];
                        backprop_f1(params, &img.pixels, &trace, reversed, &mut grads);
                        Ok(TargetOut {
                            f1_grads: grads,
                            disc_grads: dg,
                            afl_t: l_t,
                        })
                    })
                    .collect()
            } else {
                Vec::new()
            };

            // Ordered reduction.
            let bsz = chunk.len() as f64;
            let mut det_grads = vec![0.0; state.params.layout.total_params];
            let mut disc_grads = state
                .disc
                .as_ref()
                .map(|d| vec![0.0; d.data.len()])
                .unwrap_or_default();
            let mut batch_losses = LossBreakdown::zero();
            for out in outs {
                let out = out?;
                for (acc, v) in det_grads.iter_mut().zip(&out.grads) {
                    *acc += v / bsz;
                }
                if let Some(dg) = &out.disc_grads {
                    for (acc, v) in disc_grads.iter_mut().zip(dg) {
                        *acc += lambda * v / bsz;
                    }
                }
                batch_losses.l_det += out.losses.l_det / bsz;
                batch_losses.l_cls += out.losses.l_cls / bsz;
                batch_losses.l_loc += out.losses.l_loc / bsz;
                batch_losses.l_obj += out.losses.l_obj / bsz;
                if let Some(s) = out.afl_s {
                    afl_s_sum += s;
                }
            }
            if afl {
                let tn = config.target_batch_size as f64;
                for out in t_outs {
                    let out = out?;
                    for (acc, v) in det_grads.iter_mut().zip(&out.f1_grads) {
                        *acc += v / tn;
                    }
                    for (acc, v) in disc_grads.iter_mut().zip(&out.disc_grads) {
                        *acc += lambda * v / tn;
                    }
                    afl_t_sum += out.afl_t;
                    afl_t_count += 1;
                }
            }

            let finite = batch_losses.is_finite()
                && det_grads.iter().all(|v| v.is_finite())
                && disc_grads.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_idx,
                    losses: vec![
                        batch_losses.l_det,
                        batch_losses.l_cls,
                        batch_losses.l_loc,
                        batch_losses.l_obj,
                    ],
                });
            }

            sums.l_det += batch_losses.l_det * bsz;
            sums.l_cls += batch_losses.l_cls * bsz;
            sums.l_loc += batch_losses.l_loc * bsz;
            sums.l_obj += batch_losses.l_obj * bsz;

            sgd_step(
                &mut state.params.data,
                &det_grads,
                lr,
                config.momentum,
                config.weight_decay,
                &mut state.velocity,
            );
            if let Some(d) = state.disc.as_mut() {
                sgd_step(
                    &mut d.data,
                    &disc_grads,
                    lr,
                    config.momentum,
                    config.weight_decay,
                    &mut state.disc_velocity,
                );
            }
        }

        history.epochs.push(EpochStats {
            epoch,
            lr: epoch_lr,
            l_det: sums.l_det / n as f64,
            l_cls: sums.l_cls / n as f64,
            l_loc: sums.l_loc / n as f64,
            l_obj: sums.l_obj / n as f64,
            l_afl_s: afl.then_some(afl_s_sum / n as f64),
            l_afl_t: (afl && afl_t_count > 0).then_some(afl_t_sum / afl_t_count as f64),
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainOutcome {
        state,
        history,
        seed: config.seed,
    })
}

/// Trains `config.runs` replicates with seeds `seed + 0 .. seed + runs - 1`.
pub fn run_replicates(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
) -> Result<Vec<TrainOutcome>> {
    (0..config.runs)
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = config.seed + r as u64;
            train(&cfg, source, target)
        })
        .collect()
}

/// Arithmetic mean of a per-run metric.
pub fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
