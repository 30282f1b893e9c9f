//! Annotated samples and the on-disk dataset format.
//!
//! A dataset directory holds `images/NNNNNN.ppm` files plus a single
//! `labels.json` with entries `{file, boxes: [{class, cx, cy, w, h}]}` in
//! normalized coordinates. Generated datasets additionally carry a
//! `manifest.json` (seed, specs, content hash); user-supplied datasets only
//! need images and labels.
//!
//! Target-domain splits used for adaptation are loaded through
//! [`Dataset::images_only`], which drops labels at the type level so no
//! training code path can read them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Source,
    Target,
}

/// Ground-truth box in normalized center/size coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxLabel {
    #[serde(rename = "class")]
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxLabel {
    pub fn bbox(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        const EPS: f64 = 1e-9;
        if self.class_id >= num_classes {
            return Err(Error::Validation(format!(
                "class {} out of range (C={})",
                self.class_id, num_classes
            )));
        }
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(Error::Validation(format!(
                "degenerate box size {}x{}",
                self.w, self.h
            )));
        }
        let inside = self.cx - self.w / 2.0 >= -EPS
            && self.cx + self.w / 2.0 <= 1.0 + EPS
            && self.cy - self.h / 2.0 >= -EPS
            && self.cy + self.h / 2.0 <= 1.0 + EPS;
        if !inside {
            return Err(Error::Validation(format!(
                "box ({}, {}, {}, {}) extends outside the unit square",
                self.cx, self.cy, self.w, self.h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatedSample {
    pub image: Image,
    pub labels: Vec<BoxLabel>,
    pub domain: DomainTag,
}

/// One record of `labels.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelEntry {
    pub file: String,
    pub boxes: Vec<BoxLabel>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<AnnotatedSample>,
    pub files: Vec<String>,
}

/// Image-only view of a dataset. Training iterators for the target split
/// are built from this type, so labels are unreachable by construction.
#[derive(Debug, Clone)]
pub struct UnlabeledSet<'a> {
    pub images: Vec<&'a Image>,
}

impl Dataset {
    pub fn from_samples(samples: Vec<AnnotatedSample>) -> Dataset {
        let files = (0..samples.len()).map(|i| format!("mem://{i}")).collect();
        Dataset { samples, files }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn images_only(&self) -> UnlabeledSet<'_> {
        UnlabeledSet {
            images: self.samples.iter().map(|s| &s.image).collect(),
        }
    }

    /// Loads a dataset directory (`labels.json` + referenced images).
    pub fn load(dir: &Path, domain: DomainTag) -> Result<Dataset> {
        let labels_path = dir.join("labels.json");
        let raw = std::fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
        let entries: Vec<LabelEntry> = serde_json::from_slice(&raw)
            .map_err(|e| Error::Validation(format!("{}: {}", labels_path.display(), e)))?;
        let mut samples = Vec::with_capacity(entries.len());
        let mut files = Vec::with_capacity(entries.len());
        for entry in entries {
            let img_path = dir.join(&entry.file);
            let image = Image::load_ppm(&img_path)?;
            for b in &entry.boxes {
                if !(b.w > 0.0 && b.h > 0.0) {
                    return Err(Error::Validation(format!(
                        "{}: degenerate box in {}",
                        labels_path.display(),
                        entry.file
                    )));
                }
            }
            samples.push(AnnotatedSample {
                image,
                labels: entry.boxes.clone(),
                domain,
            });
            files.push(entry.file);
        }
        Ok(Dataset { samples, files })
    }
}

/// Directory layout constants shared by the generator and loaders.
pub const IMAGES_SUBDIR: &str = "images";
pub const LABELS_FILE: &str = "labels.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn image_file_name(index: usize) -> String {
    format!("{IMAGES_SUBDIR}/{index:06}.ppm")
}

pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(IMAGES_SUBDIR),
        dir.join(LABELS_FILE),
        dir.join(MANIFEST_FILE),
    )
}
