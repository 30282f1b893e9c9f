//! Deterministic dataset generation and the on-disk manifest.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    dataset_paths, image_file_name, AnnotatedSample, LabelEntry, IMAGES_SUBDIR,
};
use crate::datagen::cue::inject_nonrobust_cue;
use crate::datagen::scene::{render_scene, SceneSpec};
use crate::datagen::style::DomainSpec;
use crate::error::{Error, Result};
use crate::hashing::StreamHasher;
use crate::rng::{derive, STREAM_CUE, STREAM_SCENE};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: usize,
    pub scene: SceneSpec,
    pub domain: DomainSpec,
    pub entries: Vec<LabelEntry>,
    /// SHA-256 over all image bytes (in file order) and the labels file.
    pub content_hash: String,
}

/// Renders `n` samples in memory. Per-sample RNG is keyed by `(seed, index)`
/// so generation is order-independent and parallel-safe.
pub fn generate_samples(
    scene: &SceneSpec,
    domain: &DomainSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<AnnotatedSample>> {
    if n == 0 {
        return Err(Error::Validation("dataset size must be >= 1".into()));
    }
    scene.validate()?;
    domain.validate(scene.num_classes)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut scene_rng = derive(seed, STREAM_SCENE, i as u64);
            let mut sample = render_scene(scene, domain, &mut scene_rng)?;
            let mut cue_rng = derive(seed, STREAM_CUE, i as u64);
            inject_nonrobust_cue(&mut sample, domain, &mut cue_rng);
            Ok(sample)
        })
        .collect()
}

/// Generates `n` samples and writes `images/`, `labels.json` and
/// `manifest.json` under `dir`.
pub fn generate_dataset(
    scene: &SceneSpec,
    domain: &DomainSpec,
    n: usize,
    seed: u64,
    dir: &Path,
) -> Result<DatasetManifest> {
    let samples = generate_samples(scene, domain, n, seed)?;
    let (images_dir, labels_path, manifest_path) = dataset_paths(dir);
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut hasher = StreamHasher::new();
    let mut entries = Vec::with_capacity(n);
    for (i, sample) in samples.iter().enumerate() {
        let file = image_file_name(i);
        let bytes = sample.image.to_ppm_bytes();
        hasher.update(&bytes);
        let path = dir.join(&file);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(LabelEntry {
            file,
            boxes: sample.labels.clone(),
        });
    }
    let labels_json = serde_json::to_vec_pretty(&entries)
        .map_err(|e| Error::Validation(format!("labels serialization: {e}")))?;
    hasher.update(&labels_json);
    std::fs::write(&labels_path, &labels_json).map_err(|e| Error::io(&labels_path, e))?;

    let manifest = DatasetManifest {
        seed,
        count: n,
        scene: scene.clone(),
        domain: domain.clone(),
        entries,
        content_hash: hasher.finish_hex(),
    };
    let manifest_json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Validation(format!("manifest serialization: {e}")))?;
    std::fs::write(&manifest_path, manifest_json).map_err(|e| Error::io(&manifest_path, e))?;
    let _ = IMAGES_SUBDIR;
    Ok(manifest)
}
