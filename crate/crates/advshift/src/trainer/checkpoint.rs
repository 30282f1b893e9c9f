//! Checkpoints: a JSON header followed by flat 64-bit little-endian
//! parameter and velocity payloads. Together with the stateless
//! `(seed, epoch, index)` RNG scheme this gives bit-exact resume.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, UnlabeledSet};
use crate::detector::{DetectorConfig, DetectorParams, NetLayout};
use crate::error::{Error, Result};
use crate::featalign::DiscriminatorParams;
use crate::trainer::config::TrainConfig;
use crate::trainer::run::{config_hash, train_epochs, TrainOutcome, TrainState};

const MAGIC: &[u8; 8] = b"ADVSHIFT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub epochs_completed: usize,
    pub detector: DetectorConfig,
    pub has_disc: bool,
    pub disc_channels: usize,
    pub det_len: usize,
    pub disc_len: usize,
}

pub fn save_checkpoint(
    path: &Path,
    config: &TrainConfig,
    state: &TrainState,
    epochs_completed: usize,
    seed: u64,
) -> Result<()> {
    let header = CheckpointHeader {
        version: 1,
        config_hash: config_hash(config),
        seed,
        epochs_completed,
        detector: config.detector.clone(),
        has_disc: state.disc.is_some(),
        disc_channels: state.disc.as_ref().map(|d| d.cf).unwrap_or(0),
        det_len: state.params.data.len(),
        disc_len: state.disc.as_ref().map(|d| d.data.len()).unwrap_or(0),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Validation(format!("checkpoint header: {e}")))?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let io = |e| Error::io(path, e);
    f.write_all(MAGIC).map_err(io)?;
    f.write_all(&(header_json.len() as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    f.write_all(&header_json).map_err(|e| Error::io(path, e))?;
    let mut write_f64s = |vals: &[f64]| -> Result<()> {
        let mut buf = Vec::with_capacity(vals.len() * 8);
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    };
    write_f64s(&state.params.data)?;
    write_f64s(&state.velocity)?;
    if let Some(d) = &state.disc {
        write_f64s(&d.data)?;
        write_f64s(&state.disc_velocity)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, TrainState)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Validation(format!("{}: {}", path.display(), msg));
    if bytes.len() < 12 || &bytes[0..8] != MAGIC {
        return Err(bad("not an advshift checkpoint"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| bad(&format!("bad header: {e}")))?;
    let mut pos = 12 + header_len;
    let read_f64s = |n: usize, pos: &mut usize| -> Result<Vec<f64>> {
        let need = n * 8;
        if bytes.len() < *pos + need {
            return Err(bad("truncated payload"));
        }
        let out = bytes[*pos..*pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *pos += need;
        Ok(out)
    };
    let det_data = read_f64s(header.det_len, &mut pos)?;
    let velocity = read_f64s(header.det_len, &mut pos)?;
    let layout = NetLayout::from_config(&header.detector)?;
    if layout.total_params != header.det_len {
        return Err(bad("parameter count does not match detector config"));
    }
    let params = DetectorParams {
        layout,
        data: det_data,
    };
    let (disc, disc_velocity) = if header.has_disc {
        let data = read_f64s(header.disc_len, &mut pos)?;
        let dv = read_f64s(header.disc_len, &mut pos)?;
        let d = DiscriminatorParams {
            cf: header.disc_channels,
            hidden: crate::featalign::DISC_HIDDEN,
            data,
        };
        if DiscriminatorParams::param_len(d.cf, d.hidden) != header.disc_len {
            return Err(bad("discriminator length mismatch"));
        }
        (Some(d), dv)
    } else {
        (None, Vec::new())
    };
    Ok((
        header,
        TrainState {
            params,
            disc,
            velocity,
            disc_velocity,
        },
    ))
}

/// Resumes a checkpointed run; the remaining epochs reproduce the
/// uninterrupted run bit for bit.
pub fn resume(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&UnlabeledSet<'_>>,
    checkpoint: &Path,
) -> Result<TrainOutcome> {
    let (header, state) = load_checkpoint(checkpoint)?;
    if header.config_hash != config_hash(config) {
        return Err(Error::Config(
            "checkpoint was produced by a different config".into(),
        ));
    }
    if header.epochs_completed > config.epochs {
        return Err(Error::Config(format!(
            "checkpoint already has {} epochs, config asks for {}",
            header.epochs_completed, config.epochs
        )));
    }
    train_epochs(config, source, target, state, header.epochs_completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_samples, DomainSpec, SceneSpec};
    use crate::detector::DetectorConfig;
    use crate::trainer::config::TrainMode;
    use crate::trainer::run::train;

    fn tiny_setup() -> (TrainConfig, Dataset) {
        let scene = SceneSpec {
            resolution: (32, 32),
            ..SceneSpec::default()
        };
        let samples = generate_samples(&scene, &DomainSpec::source(), 12, 5).unwrap();
        let source = Dataset::from_samples(samples);
        let config = TrainConfig {
            mode: TrainMode::At,
            epochs: 4,
            batch_size: 4,
            warmup_epochs: 1,
            runs: 1,
            detector: DetectorConfig::small(),
            ..TrainConfig::default()
        };
        (config, source)
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let (config, source) = tiny_setup();
        let outcome = train(&config, &source, None).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("ckpt.bin");
        save_checkpoint(&path, &config, &outcome.state, config.epochs, config.seed).unwrap();
        let (header, state) = load_checkpoint(&path).unwrap();
        assert_eq!(header.epochs_completed, 4);
        assert_eq!(state.params.data, outcome.state.params.data);
        assert_eq!(state.velocity, outcome.state.velocity);
    }

    #[test]
    fn resume_reproduces_uninterrupted_run_bitwise() {
        let (config, source) = tiny_setup();
        let full = train(&config, &source, None).unwrap();

        // interrupt after 2 of the 4 scheduled epochs
        let state = crate::trainer::run::initial_state(&config).unwrap();
        let prefix =
            crate::trainer::run::train_epoch_range(&config, &source, None, state, 0, 2).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("ckpt.bin");
        save_checkpoint(&path, &config, &prefix.state, 2, config.seed).unwrap();

        let resumed = resume(&config, &source, None, &path).unwrap();
        assert_eq!(resumed.state.params.data, full.state.params.data);
        assert_eq!(resumed.state.velocity, full.state.velocity);
        // resumed history covers exactly the remaining epochs and matches
        // the uninterrupted rows (excluding wall time)
        assert_eq!(resumed.history.epochs.len(), 2);
        for (r, f) in resumed.history.epochs.iter().zip(&full.history.epochs[2..]) {
            assert_eq!(r.epoch, f.epoch);
            assert_eq!(r.lr, f.lr);
            assert_eq!(r.l_det, f.l_det);
        }
    }

    #[test]
    fn mismatched_config_is_rejected_on_resume() {
        let (config, source) = tiny_setup();
        let state = crate::trainer::run::initial_state(&config).unwrap();
        let prefix =
            crate::trainer::run::train_epoch_range(&config, &source, None, state, 0, 1).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("ckpt.bin");
        save_checkpoint(&path, &config, &prefix.state, 1, config.seed).unwrap();
        let mut other = config.clone();
        other.lr_max = 0.02;
        assert!(resume(&other, &source, None, &path).is_err());
    }
}
