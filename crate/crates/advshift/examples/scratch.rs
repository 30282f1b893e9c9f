// temporary calibration harness, removed before release
use std::time::Instant;

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::DetectorConfig;
use advshift::metrics::{evaluate_detector, EvalSettings};
use advshift::perturb::{applied_loss_det, fgsm, pgd, PerturbationSpec};
use advshift::tensor::Tensor3;
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() {
    let settings = EvalSettings::default();
    let cfg = DetectorConfig::default();

    // ---- A: no-rotation source, ST 50 epochs: criterion-3 candidate ----
    let norot = SceneSpec {
        random_rotation: false,
        ..SceneSpec::default()
    };
    let src_train_nr = Dataset::from_samples(
        generate_samples(&norot, &DomainSpec::source(), 500, 100).unwrap(),
    );
    let src_test_nr = Dataset::from_samples(
        generate_samples(&norot, &DomainSpec::source(), 200, 101).unwrap(),
    );
    let st_cfg = TrainConfig {
        mode: TrainMode::St,
        runs: 1,
        seed: 0,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let st_nr = train(&st_cfg, &src_train_nr, None).unwrap();
    let map_nr = evaluate_detector(st_nr.params(), &cfg, &src_test_nr, &settings).unwrap();
    println!(
        "A norot ST50: {:.0}s src mAP={:.3} {:?}",
        t0.elapsed().as_secs_f64(),
        map_nr.map,
        map_nr.per_class_ap
    );

    // C3 attack stats on model A
    let atk_eps = 2.0 / 255.0;
    let mut raised = 0;
    let mut fgsm_losses = Vec::new();
    let mut pgd_losses = Vec::new();
    for (i, s) in src_test_nr.samples.iter().take(100).enumerate() {
        let clean = applied_loss_det(st_nr.params(), &cfg, s, &Tensor3::zeros(3, 64, 64)).unwrap();
        let f = fgsm(st_nr.params(), &cfg, s, &PerturbationSpec::fgsm_zero(atk_eps), i as u64).unwrap();
        let lf = applied_loss_det(st_nr.params(), &cfg, s, &f.delta).unwrap();
        if lf > clean {
            raised += 1;
        }
        fgsm_losses.push(lf);
        let p = pgd(st_nr.params(), &cfg, s, &PerturbationSpec::pgd(atk_eps)).unwrap();
        pgd_losses.push(applied_loss_det(st_nr.params(), &cfg, s, &p.delta).unwrap());
    }
    fgsm_losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pgd_losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "A attacks: fgsm raised loss on {raised}/100, median fgsm {:.4}, median pgd {:.4}",
        fgsm_losses[50], pgd_losses[50]
    );

    // ---- B: rotation, ST 80 epochs ----
    let scene = SceneSpec::default();
    let src_train = Dataset::from_samples(
        generate_samples(&scene, &DomainSpec::source(), 500, 100).unwrap(),
    );
    let src_test = Dataset::from_samples(
        generate_samples(&scene, &DomainSpec::source(), 200, 101).unwrap(),
    );
    let mut st80 = st_cfg.clone();
    st80.epochs = 80;
    let t0 = Instant::now();
    let st_rot = train(&st80, &src_train, None).unwrap();
    let map_rot = evaluate_detector(st_rot.params(), &cfg, &src_test, &settings).unwrap();
    println!(
        "B rot ST80: {:.0}s src mAP={:.3} {:?}",
        t0.elapsed().as_secs_f64(),
        map_rot.map,
        map_rot.per_class_ap
    );

    // ---- C: criterion 8 preview: beta=0.1 target with cues preserved ----
    let small_shift = Dataset::from_samples(
        generate_samples(&scene, &DomainSpec::target_with_beta(0.1), 200, 103).unwrap(),
    );
    let at_cfg = TrainConfig {
        mode: TrainMode::At,
        runs: 1,
        seed: 0,
        ..TrainConfig::default()
    };
    let st_def = train(&st_cfg, &src_train, None).unwrap();
    let at_def = train(&at_cfg, &src_train, None).unwrap();
    let st_small = evaluate_detector(st_def.params(), &cfg, &small_shift, &settings).unwrap();
    let at_small = evaluate_detector(at_def.params(), &cfg, &small_shift, &settings).unwrap();
    println!(
        "C small-shift beta=0.1: ST {:.3} vs AT {:.3} (need AT <= ST)",
        st_small.map, at_small.map
    );

    // ---- D: mini beta grid with the same two models ----
    let src_images: Vec<&advshift::image::Image> =
        src_train.samples.iter().map(|s| &s.image).collect();
    let src_stats = advshift::metrics::fit_gaussian(
        &advshift::metrics::extract_pooled_features(st_def.params(), &src_images).unwrap(),
    )
    .unwrap();
    println!("beta   fd        map_st   map_at   ratio");
    for beta in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let test = Dataset::from_samples(
            generate_samples(&scene, &DomainSpec::target_with_beta(beta), 200, 103).unwrap(),
        );
        let imgs: Vec<&advshift::image::Image> = test.samples.iter().map(|s| &s.image).collect();
        let stats = advshift::metrics::fit_gaussian(
            &advshift::metrics::extract_pooled_features(st_def.params(), &imgs).unwrap(),
        )
        .unwrap();
        let fd = advshift::metrics::frechet_distance(&src_stats, &stats).unwrap();
        let m_st = evaluate_detector(st_def.params(), &cfg, &test, &settings).unwrap().map;
        let m_at = evaluate_detector(at_def.params(), &cfg, &test, &settings).unwrap().map;
        println!(
            "{beta:.1}  {fd:>9.4}  {m_st:.3}    {m_at:.3}    {:.3}",
            m_at / m_st
        );
    }
}
