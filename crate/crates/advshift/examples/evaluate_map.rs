//! Evaluate a detector: per-class average precision at IoU 0.5 and mAP.
//!
//! ```sh
//! cargo run --release --example evaluate_map
//! ```

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::DetectorConfig;
use advshift::metrics::{detect_image, evaluate_detector, EvalSettings};
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() -> advshift::Result<()> {
    let scene = SceneSpec {
        resolution: (32, 32),
        ..SceneSpec::default()
    };
    let train_set = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 128, 2)?);
    let test_set = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 48, 3)?);

    let config = TrainConfig {
        mode: TrainMode::St,
        epochs: 25,
        batch_size: 16,
        warmup_epochs: 2,
        runs: 1,
        seed: 1,
        detector: DetectorConfig::small(),
        ..TrainConfig::default()
    };
    let outcome = train(&config, &train_set, None)?;

    let settings = EvalSettings::default();
    let report = evaluate_detector(outcome.params(), &config.detector, &test_set, &settings)?;
    println!("class      AP@0.5");
    let names = ["circle", "square", "triangle"];
    for (c, ap) in report.per_class_ap.iter().enumerate() {
        match ap {
            Some(v) => println!("{:<9}  {:.3}", names.get(c).unwrap_or(&"?"), v),
            None => println!("{:<9}  (no ground truth or detections)", names[c]),
        }
    }
    println!("mAP        {:.3}", report.map);

    // a peek at raw detections for the first test image
    let dets = detect_image(outcome.params(), &config.detector, &test_set.samples[0].image, &settings)?;
    println!("\nfirst image: {} detections above {:.2}", dets.len(), settings.score_threshold);
    for d in dets.iter().take(5) {
        println!(
            "  {} score {:.3} at ({:.2}, {:.2}) {:.2}x{:.2}",
            names.get(d.class_id).unwrap_or(&"?"),
            d.score,
            d.cx,
            d.cy,
            d.w,
            d.h
        );
    }
    Ok(())
}
