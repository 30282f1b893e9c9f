//! Train the micro detector (standard training) and watch the loss fall.
//!
//! ```sh
//! cargo run --release --example train_detector
//! ```

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::DetectorConfig;
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() -> advshift::Result<()> {
    let scene = SceneSpec {
        resolution: (32, 32),
        ..SceneSpec::default()
    };
    let source = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 96, 1)?);

    let config = TrainConfig {
        mode: TrainMode::St,
        epochs: 10,
        batch_size: 16,
        warmup_epochs: 2,
        runs: 1,
        seed: 0,
        detector: DetectorConfig::small(),
        ..TrainConfig::default()
    };

    let outcome = train(&config, &source, None)?;
    println!("epoch    lr        l_det     l_cls     l_loc     l_obj");
    for e in &outcome.history.epochs {
        println!(
            "{:>5}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}",
            e.epoch, e.lr, e.l_det, e.l_cls, e.l_loc, e.l_obj
        );
    }
    let first = &outcome.history.epochs[0];
    let last = outcome.history.epochs.last().unwrap();
    println!(
        "\ndetection loss {:.4} -> {:.4} over {} epochs",
        first.l_det, last.l_det, config.epochs
    );
    Ok(())
}
