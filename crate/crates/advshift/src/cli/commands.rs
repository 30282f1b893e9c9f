//! Implementations behind the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::configs::{GenerateConfig, SweepConfig, TrainCmdConfig};
use crate::dataset::{Dataset, DomainTag};
use crate::datagen::{generate_dataset, generate_samples, DomainSpec, SceneSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    beta_sweep, evaluate_detector, shift_analysis, spearman, sweep_rows_to_csv, Calibration,
    EvalSettings, SweepRow,
};
use crate::perturb::{AttackLoss, AttackMethod, PerturbationSpec};
use crate::trainer::{
    load_checkpoint, resume, run_replicates, save_checkpoint, TrainConfig, TrainMode,
    TrainOutcome,
};

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Validation(format!("serialization: {e}")))?;
    write_file(path, &bytes)
}

/// Copies the resolved config into the output directory so every run is
/// reproducible from its artifacts alone.
fn copy_config<T: Serialize>(out_dir: &Path, config: &T) -> Result<()> {
    write_json(&out_dir.join("config.json"), config)
}

/// Pretty-prints an epsilon in 1/255 units when it is a round multiple.
pub fn epsilon_display(epsilon: f64) -> String {
    if epsilon == 0.0 {
        return "0".into();
    }
    let k = epsilon * 255.0;
    if (k - k.round()).abs() < 1e-9 {
        format!("{}/255", k.round() as i64)
    } else {
        format!("{k}/255")
    }
}

pub fn cmd_generate(mut config: GenerateConfig, out_override: Option<PathBuf>, seed_override: Option<u64>) -> Result<()> {
    if let Some(out) = out_override {
        config.out_dir = out;
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let out = config.out_dir.clone();
    copy_config(&out, &config)?;
    let splits: [(&str, &DomainSpec, usize, u64); 4] = [
        ("source_train", &config.source_domain, config.counts.source_train, config.seed),
        ("source_test", &config.source_domain, config.counts.source_test, config.seed + 1),
        ("target_train", &config.target_domain, config.counts.target_train, config.seed + 2),
        ("target_test", &config.target_domain, config.counts.target_test, config.seed + 3),
    ];
    for (name, domain, count, seed) in splits {
        let dir = out.join(name);
        let manifest = generate_dataset(&config.scene, domain, count, seed, &dir)?;
        println!(
            "{name}: {count} images, beta={}, cues={}, hash={}",
            domain.beta,
            if domain.nonrobust_present { "on" } else { "randomized" },
            manifest.content_hash
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    final_l_det: f64,
    final_l_cls: f64,
    final_l_loc: f64,
    final_l_obj: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    runs: Vec<RunSummary>,
    mean_final_l_det: f64,
}

fn summarize(outcomes: &[TrainOutcome]) -> TrainSummary {
    let runs: Vec<RunSummary> = outcomes
        .iter()
        .map(|o| {
            let last = o.history.epochs.last().expect("at least one epoch");
            RunSummary {
                seed: o.seed,
                final_l_det: last.l_det,
                final_l_cls: last.l_cls,
                final_l_loc: last.l_loc,
                final_l_obj: last.l_obj,
            }
        })
        .collect();
    let mean = runs.iter().map(|r| r.final_l_det).sum::<f64>() / runs.len() as f64;
    TrainSummary {
        runs,
        mean_final_l_det: mean,
    }
}

fn write_outcome(out_dir: &Path, run_idx: usize, config: &TrainConfig, outcome: &TrainOutcome) -> Result<()> {
    let run_dir = out_dir.join(format!("run_{run_idx}"));
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    save_checkpoint(
        &run_dir.join("checkpoint.bin"),
        config,
        &outcome.state,
        config.epochs,
        outcome.seed,
    )?;
    write_file(
        &run_dir.join("history.csv"),
        outcome.history.to_csv().as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_train(
    mut config: TrainCmdConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    runs_override: Option<usize>,
    resume_from: Option<PathBuf>,
) -> Result<()> {
    if let Some(seed) = seed_override {
        config.train.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_dir = out;
    }
    if let Some(runs) = runs_override {
        config.train.runs = runs;
    }
    let source = Dataset::load(&config.source_train, DomainTag::Source)?;
    let target_ds = match &config.target_train {
        Some(path) => Some(Dataset::load(path, DomainTag::Target)?),
        None => None,
    };
    let target = target_ds.as_ref().map(|d| d.images_only());
    println!(
        "mode={} epsilon={} selector={:?} epochs={} runs={}",
        config.train.mode.label(),
        epsilon_display(config.train.effective_perturbation().epsilon),
        config.train.perturbation.loss_selector,
        config.train.epochs,
        config.train.runs,
    );
    copy_config(&config.out_dir, &config)?;

    if let Some(ckpt) = resume_from {
        let outcome = resume(&config.train, &source, target.as_ref(), &ckpt)?;
        write_outcome(&config.out_dir, 0, &config.train, &outcome)?;
        let last = outcome.history.epochs.last();
        println!(
            "resumed run complete: final l_det = {}",
            last.map(|e| e.l_det).unwrap_or(f64::NAN)
        );
        return Ok(());
    }

    let outcomes = run_replicates(&config.train, &source, target.as_ref())?;
    for (r, outcome) in outcomes.iter().enumerate() {
        let mut cfg_r = config.train.clone();
        cfg_r.seed = outcome.seed;
        write_outcome(&config.out_dir, r, &cfg_r, outcome)?;
        let last = outcome.history.epochs.last().expect("epochs");
        println!("run {r} (seed {}): final l_det = {}", outcome.seed, last.l_det);
    }
    write_json(&config.out_dir.join("summary.json"), &summarize(&outcomes))?;
    Ok(())
}

/// Per-class AP table shaped like the evaluation tables: one column per
/// class plus the final mAP.
fn eval_csv(per_class: &[Option<f64>], map: f64) -> String {
    let mut header: Vec<String> = (0..per_class.len()).map(|c| format!("class_{c}")).collect();
    header.push("map".into());
    let mut row: Vec<String> = per_class
        .iter()
        .map(|ap| ap.map(|v| v.to_string()).unwrap_or_default())
        .collect();
    row.push(map.to_string());
    format!("{}\n{}\n", header.join(","), row.join(","))
}

pub fn cmd_evaluate(checkpoint: &Path, dataset_dir: &Path, out: Option<PathBuf>) -> Result<()> {
    let (header, state) = load_checkpoint(checkpoint)?;
    let dataset = Dataset::load(dataset_dir, DomainTag::Target)?;
    let num_classes = header.detector.num_classes;
    for s in &dataset.samples {
        for l in &s.labels {
            if l.class_id >= num_classes {
                return Err(Error::Config(format!(
                    "dataset has class {} but the checkpointed detector was trained with {} classes",
                    l.class_id, num_classes
                )));
            }
        }
    }
    let report = evaluate_detector(
        &state.params,
        &header.detector,
        &dataset,
        &EvalSettings::default(),
    )?;
    let csv = eval_csv(&report.per_class_ap, report.map);
    match out {
        Some(path) => {
            write_file(&path, csv.as_bytes())?;
            println!("mAP@0.5 = {}", report.map);
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn cmd_fd(
    checkpoint: &Path,
    dataset_a: &Path,
    dataset_b: &Path,
    map_st: Option<f64>,
    map_at: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (_, state) = load_checkpoint(checkpoint)?;
    let a = Dataset::load(dataset_a, DomainTag::Source)?;
    let b = Dataset::load(dataset_b, DomainTag::Target)?;
    let a_images = a.images_only();
    let b_images = b.images_only();
    let report = shift_analysis(
        &state.params,
        &a_images.images,
        &b_images.images,
        map_st,
        map_at,
        None,
    )?;
    println!("fd = {}", report.fd);
    println!("recommendation = {:?}", report.recommendation);
    if let Some(path) = out {
        write_json(&path, &report)?;
    } else {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Validation(format!("serialization: {e}")))?;
        println!("{json}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepPreset {
    #[value(name = "beta-sweep")]
    BetaSweep,
    #[value(name = "epsilon-sweep")]
    EpsilonSweep,
    #[value(name = "loss-compare")]
    LossCompare,
    #[value(name = "mode-compare")]
    ModeCompare,
}

struct Bench {
    source_train: Dataset,
    source_test: Dataset,
    target_train: Dataset,
    target_test: Dataset,
}

fn build_bench(scene: &SceneSpec, counts: (usize, usize), seed: u64) -> Result<Bench> {
    let (train_n, test_n) = counts;
    let src = DomainSpec::source();
    let tgt = DomainSpec::target();
    Ok(Bench {
        source_train: Dataset::from_samples(generate_samples(scene, &src, train_n, seed)?),
        source_test: Dataset::from_samples(generate_samples(scene, &src, test_n, seed + 1)?),
        target_train: Dataset::from_samples(generate_samples(scene, &tgt, train_n, seed + 2)?),
        target_test: Dataset::from_samples(generate_samples(scene, &tgt, test_n, seed + 3)?),
    })
}

fn mean_map(
    outcomes: &[TrainOutcome],
    detector: &crate::detector::DetectorConfig,
    dataset: &Dataset,
) -> Result<f64> {
    let settings = EvalSettings::default();
    let mut acc = 0.0;
    for o in outcomes {
        acc += evaluate_detector(o.params(), detector, dataset, &settings)?.map;
    }
    Ok(acc / outcomes.len() as f64)
}

pub fn cmd_sweep(
    preset: SweepPreset,
    mut config: SweepConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    runs_override: Option<usize>,
) -> Result<()> {
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_dir = out;
    }
    if let Some(runs) = runs_override {
        config.train.runs = runs;
    }
    let out = config.out_dir.clone();
    copy_config(&out, &config)?;
    match preset {
        SweepPreset::BetaSweep => {
            let mut st_cfg = config.train.clone();
            st_cfg.mode = TrainMode::St;
            st_cfg.seed = config.seed;
            let mut at_cfg = config.train.clone();
            at_cfg.mode = TrainMode::At;
            at_cfg.seed = config.seed;
            let rows = beta_sweep(
                &config.scene,
                &config.betas,
                &st_cfg,
                &at_cfg,
                config.counts.train,
                config.counts.test,
                config.seed,
            )?;
            write_file(&out.join("sweep.csv"), sweep_rows_to_csv(&rows).as_bytes())?;
            report_sweep(&rows, &out)?;
        }
        SweepPreset::EpsilonSweep => {
            let bench = build_bench(&config.scene, (config.counts.train, config.counts.test), config.seed)?;
            let methods = [
                AttackMethod::FgsmZero,
                AttackMethod::FgsmRandom,
                AttackMethod::Pgd,
            ];
            let mut csv = String::from("method,epsilon,map_source,map_target\n");
            // the st baseline (epsilon = 0) is trained once and shared
            let mut st_cfg = config.train.clone();
            st_cfg.mode = TrainMode::St;
            st_cfg.seed = config.seed;
            let mut st_maps: Option<(f64, f64)> = None;
            for method in methods {
                for &eps in &config.epsilons {
                    let (src_map, tgt_map) = if eps == 0.0 {
                        if st_maps.is_none() {
                            let runs = run_replicates(&st_cfg, &bench.source_train, None)?;
                            st_maps = Some((
                                mean_map(&runs, &config.train.detector, &bench.source_test)?,
                                mean_map(&runs, &config.train.detector, &bench.target_test)?,
                            ));
                        }
                        st_maps.unwrap()
                    } else {
                        let mut cfg = config.train.clone();
                        cfg.mode = TrainMode::At;
                        cfg.seed = config.seed;
                        cfg.perturbation = match method {
                            AttackMethod::FgsmZero => PerturbationSpec::fgsm_zero(eps),
                            AttackMethod::FgsmRandom => PerturbationSpec::fgsm_random(eps, config.seed),
                            AttackMethod::Pgd => PerturbationSpec::pgd(eps),
                            AttackMethod::None => unreachable!(),
                        };
                        let runs = run_replicates(&cfg, &bench.source_train, None)?;
                        (
                            mean_map(&runs, &config.train.detector, &bench.source_test)?,
                            mean_map(&runs, &config.train.detector, &bench.target_test)?,
                        )
                    };
                    let method_name = match method {
                        AttackMethod::FgsmZero => "fgsm_zero",
                        AttackMethod::FgsmRandom => "fgsm_random",
                        AttackMethod::Pgd => "pgd",
                        AttackMethod::None => unreachable!(),
                    };
                    csv.push_str(&format!("{method_name},{eps},{src_map},{tgt_map}\n"));
                    println!(
                        "{method_name} eps={}: source {src_map}, target {tgt_map}",
                        epsilon_display(eps)
                    );
                }
            }
            write_file(&out.join("sweep.csv"), csv.as_bytes())?;
        }
        SweepPreset::LossCompare => {
            let bench = build_bench(&config.scene, (config.counts.train, config.counts.test), config.seed)?;
            let selectors = [
                AttackLoss::Det,
                AttackLoss::Mtl,
                AttackLoss::Cls,
                AttackLoss::Loc,
                AttackLoss::Obj,
            ];
            let mut csv = String::from("selector,map_source,map_target\n");
            for selector in selectors {
                let mut cfg = config.train.clone();
                cfg.mode = TrainMode::At;
                cfg.seed = config.seed;
                cfg.perturbation.loss_selector = selector;
                let runs = run_replicates(&cfg, &bench.source_train, None)?;
                let src = mean_map(&runs, &config.train.detector, &bench.source_test)?;
                let tgt = mean_map(&runs, &config.train.detector, &bench.target_test)?;
                let name = format!("{selector:?}").to_lowercase();
                csv.push_str(&format!("{name},{src},{tgt}\n"));
                println!("delta_{name}: source {src}, target {tgt}");
            }
            write_file(&out.join("sweep.csv"), csv.as_bytes())?;
        }
        SweepPreset::ModeCompare => {
            let bench = build_bench(&config.scene, (config.counts.train, config.counts.test), config.seed)?;
            let target_images = bench.target_train.images_only();
            let num_classes = config.train.detector.num_classes;
            let mut header: Vec<String> =
                (0..num_classes).map(|c| format!("class_{c}")).collect();
            header.push("map".into());
            let mut csv = format!("mode,{}\n", header.join(","));
            for mode in [TrainMode::St, TrainMode::StAfl, TrainMode::At, TrainMode::AtAfl] {
                let mut cfg = config.train.clone();
                cfg.mode = mode;
                cfg.seed = config.seed;
                let target = mode.uses_afl().then_some(&target_images);
                let runs = run_replicates(&cfg, &bench.source_train, target)?;
                // per-class APs averaged over replicates
                let settings = EvalSettings::default();
                let mut per_class = vec![0.0; num_classes];
                let mut map = 0.0;
                for o in &runs {
                    let rep = evaluate_detector(
                        o.params(),
                        &config.train.detector,
                        &bench.target_test,
                        &settings,
                    )?;
                    for (acc, ap) in per_class.iter_mut().zip(&rep.per_class_ap) {
                        *acc += ap.unwrap_or(0.0) / runs.len() as f64;
                    }
                    map += rep.map / runs.len() as f64;
                }
                let cells: Vec<String> = per_class
                    .iter()
                    .map(|v| v.to_string())
                    .chain(std::iter::once(map.to_string()))
                    .collect();
                csv.push_str(&format!("{},{}\n", mode.label(), cells.join(",")));
                println!("{}: target mAP {}", mode.label(), map);
            }
            write_file(&out.join("sweep.csv"), csv.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepReport {
    spearman_fd_ratio: f64,
    calibration: Option<Calibration>,
}

fn report_sweep(rows: &[SweepRow], out: &Path) -> Result<()> {
    let fds: Vec<f64> = rows.iter().map(|r| r.fd).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let rho = spearman(&fds, &ratios);
    let calibration = Calibration::from_sweep(rows);
    println!("spearman(fd, ratio) = {rho}");
    if let Some(c) = &calibration {
        println!("ratio crosses 1.0 at fd ~= {}", c.fd_threshold);
    }
    write_json(
        &out.join("report.json"),
        &SweepReport {
            spearman_fd_ratio: rho,
            calibration,
        },
    )
}

/// Consolidates artifacts found in a results directory.
pub fn cmd_report(dir: &Path) -> Result<()> {
    let mut found = false;
    let sweep_path = dir.join("sweep.csv");
    if sweep_path.exists() {
        found = true;
        let raw = std::fs::read_to_string(&sweep_path).map_err(|e| Error::io(&sweep_path, e))?;
        let mut lines = raw.lines();
        let header = lines.next().unwrap_or_default();
        println!("{header}");
        let mut rows: Vec<SweepRow> = Vec::new();
        for line in lines {
            println!("{line}");
            let cells: Vec<&str> = line.split(',').collect();
            if header.starts_with("beta,") && cells.len() == 5 {
                let f = |i: usize| cells[i].parse::<f64>().unwrap_or(f64::NAN);
                rows.push(SweepRow {
                    beta: f(0),
                    fd: f(1),
                    map_st: f(2),
                    map_at: f(3),
                    ratio: f(4),
                });
            }
        }
        if !rows.is_empty() {
            report_sweep(&rows, dir)?;
        }
    }
    let summary = dir.join("summary.json");
    if summary.exists() {
        found = true;
        let raw = std::fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?;
        println!("{raw}");
    }
    for name in ["shift_report.json", "report.json"] {
        let p = dir.join(name);
        if p.exists() {
            found = true;
            let raw = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            println!("{raw}");
        }
    }
    if !found {
        return Err(Error::Validation(format!(
            "no advshift artifacts (sweep.csv, summary.json, *report.json) under {}",
            dir.display()
        )));
    }
    Ok(())
}
