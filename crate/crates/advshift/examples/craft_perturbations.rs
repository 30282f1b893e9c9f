//! Craft adversarial perturbations against a trained micro detector and
//! compare how much each attack raises the detection loss.
//!
//! ```sh
//! cargo run --release --example craft_perturbations
//! ```

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::DetectorConfig;
use advshift::perturb::{
    applied_loss_det, fgsm, per_task_deltas, pgd, select_mtl, PerturbationSpec,
};
use advshift::tensor::Tensor3;
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() -> advshift::Result<()> {
    let scene = SceneSpec {
        resolution: (32, 32),
        ..SceneSpec::default()
    };
    let source = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 96, 3)?);
    let held_out = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 16, 4)?);

    let config = TrainConfig {
        mode: TrainMode::St,
        epochs: 12,
        batch_size: 16,
        warmup_epochs: 2,
        runs: 1,
        seed: 0,
        detector: DetectorConfig::small(),
        ..TrainConfig::default()
    };
    let model = train(&config, &source, None)?;
    let params = model.params();
    let cfg = &config.detector;

    let eps = 2.0 / 255.0;
    println!("attacks at epsilon = 2/255 on {} held-out samples\n", held_out.len());
    println!("sample   clean     fgsm_zero fgsm_rand mtl       pgd10");
    let zero_spec = PerturbationSpec::fgsm_zero(eps);
    let rand_spec = PerturbationSpec::fgsm_random(eps, 9);
    let pgd_spec = PerturbationSpec::pgd(eps);
    for (i, s) in held_out.samples.iter().enumerate() {
        let clean = applied_loss_det(
            params,
            cfg,
            s,
            &Tensor3::zeros(3, s.image.height(), s.image.width()),
        )?;
        let f0 = fgsm(params, cfg, s, &zero_spec, i as u64)?;
        let fr = fgsm(params, cfg, s, &rand_spec, i as u64)?;
        let mtl = select_mtl(params, cfg, s, per_task_deltas(params, cfg, s, &zero_spec, i as u64)?)?;
        let p = pgd(params, cfg, s, &pgd_spec)?;
        println!(
            "{:>6}   {:.5}   {:.5}   {:.5}   {:.5}   {:.5}",
            i,
            clean,
            applied_loss_det(params, cfg, s, &f0.delta)?,
            applied_loss_det(params, cfg, s, &fr.delta)?,
            applied_loss_det(params, cfg, s, &mtl.delta)?,
            applied_loss_det(params, cfg, s, &p.delta)?,
        );
        assert!(f0.linf_norm() <= eps);
        assert!(p.linf_norm() <= eps + 1e-15);
    }
    println!("\nevery perturbation stayed inside the L-infinity ball");
    Ok(())
}
