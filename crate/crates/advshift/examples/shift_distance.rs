//! Quantify domain shift with the Fréchet distance over pooled detector
//! features, and watch it grow along the stylization knob.
//!
//! ```sh
//! cargo run --release --example shift_distance
//! ```

use advshift::dataset::Dataset;
use advshift::datagen::{generate_samples, DomainSpec, SceneSpec};
use advshift::detector::DetectorConfig;
use advshift::image::Image;
use advshift::metrics::{extract_pooled_features, fit_gaussian, frechet_distance, shift_analysis};
use advshift::trainer::{train, TrainConfig, TrainMode};

fn main() -> advshift::Result<()> {
    let scene = SceneSpec {
        resolution: (32, 32),
        ..SceneSpec::default()
    };
    let source = Dataset::from_samples(generate_samples(&scene, &DomainSpec::source(), 128, 11)?);

    // a briefly trained detector serves as the frozen feature extractor
    let config = TrainConfig {
        mode: TrainMode::St,
        epochs: 8,
        batch_size: 16,
        warmup_epochs: 1,
        runs: 1,
        seed: 2,
        detector: DetectorConfig::small(),
        ..TrainConfig::default()
    };
    let extractor = train(&config, &source, None)?;
    let params = extractor.params();

    let source_images: Vec<&Image> = source.samples.iter().map(|s| &s.image).collect();
    let source_stats = fit_gaussian(&extract_pooled_features(params, &source_images)?)?;

    println!("beta    fd");
    for i in 0..=10 {
        let beta = i as f64 / 10.0;
        let shifted = Dataset::from_samples(generate_samples(
            &scene,
            &DomainSpec::target_with_beta(beta),
            128,
            12,
        )?);
        let images: Vec<&Image> = shifted.samples.iter().map(|s| &s.image).collect();
        let stats = fit_gaussian(&extract_pooled_features(params, &images)?)?;
        println!("{beta:.1}   {:.4}", frechet_distance(&source_stats, &stats)?);
    }

    // full report against the fully shifted domain, with externally
    // supplied mAPs for the ratio
    let target = Dataset::from_samples(generate_samples(&scene, &DomainSpec::target(), 128, 12)?);
    let target_images: Vec<&Image> = target.samples.iter().map(|s| &s.image).collect();
    let report = shift_analysis(
        params,
        &source_images,
        &target_images,
        Some(0.30),
        Some(0.45),
        None,
    )?;
    println!("\nfull-shift report:");
    println!("  fd             {:.4}", report.fd);
    println!("  map ratio      {:?}", report.map_ratio);
    println!("  recommendation {:?}", report.recommendation);
    Ok(())
}
