//! Adversarial feature learning: the domain discriminator tries to tell
//! source features from target features while F1, through the gradient
//! reversal layer, tries to make them indistinguishable.
//!
//! ```sh
//! cargo run --release --example feature_alignment
//! ```

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::{forward_f1, DetectorConfig};
use advshift::featalign::discriminate;
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() -> advshift::Result<()> {
    let scene = SceneSpec {
        resolution: (32, 32),
        ..SceneSpec::default()
    };
    let source = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 64, 5)?);
    let target = Dataset::from_samples(generate_samples(&scene, &DomainSpec::target(), 64, 6)?);
    let target_images = target.images_only();

    let config = TrainConfig {
        mode: TrainMode::AtAfl,
        epochs: 10,
        batch_size: 16,
        target_batch_size: 16,
        warmup_epochs: 2,
        runs: 1,
        seed: 0,
        detector: DetectorConfig::small(),
        ..TrainConfig::default()
    };
    let outcome = train(&config, &source, Some(&target_images))?;

    println!("epoch  l_det     l_afl_s   l_afl_t");
    for e in &outcome.history.epochs {
        println!(
            "{:>5}  {:.6}  {:.6}  {:.6}",
            e.epoch,
            e.l_det,
            e.l_afl_s.unwrap(),
            e.l_afl_t.unwrap()
        );
    }

    // domain predictions after training: source should sit below target,
    // and alignment pushes both toward the 0.5 decision boundary
    let params = outcome.params();
    let disc = outcome.state.disc.as_ref().expect("afl mode trains a discriminator");
    let mean_pred = |ds: &Dataset| -> advshift::Result<f64> {
        let mut acc = 0.0;
        for s in &ds.samples {
            let trace = forward_f1(params, &s.image.pixels)?;
            let map = discriminate(disc, trace.activations.last().unwrap())?;
            acc += map.data.iter().sum::<f64>() / map.data.len() as f64;
        }
        Ok(acc / ds.len() as f64)
    };
    println!("\nmean domain prediction: source {:.3} (to 0), target {:.3} (to 1)",
        mean_pred(&source)?,
        mean_pred(&target)?
    );
    Ok(())
}
