//! Command-line front end: reproducible, config-driven experiment commands.
//!
//! Exit codes: 0 on success, 2 for usage/config errors, 1 for runtime
//! failures. `ADVSHIFT_WORKERS` caps the worker thread count.

pub mod commands;
pub mod configs;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;

pub use commands::{epsilon_display, SweepPreset};
pub use configs::{GenerateConfig, SplitCounts, SweepConfig, SweepCounts, TrainCmdConfig};

#[derive(Parser)]
#[command(
    name = "advshift",
    about = "Adversarial training as domain adaptation for object detection, at desk scale",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic two-domain benchmark datasets.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a detector (modes: st, st-afl, at, at-afl).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the replicate count.
        #[arg(long)]
        runs: Option<usize>,
        /// Resume from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset (per-class AP at IoU 0.5 + mAP).
    Evaluate {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// Write the AP table CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fréchet distance between two datasets through a checkpointed F1.
    Fd {
        checkpoint: PathBuf,
        dataset_a: PathBuf,
        dataset_b: PathBuf,
        /// Target-domain mAP of a standard-trained model (for the ratio).
        #[arg(long)]
        map_st: Option<f64>,
        /// Target-domain mAP of an adversarially trained model.
        #[arg(long)]
        map_at: Option<f64>,
        /// Write the shift report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid preset.
    Sweep {
        #[arg(long, value_enum)]
        preset: SweepPreset,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Summarize the artifacts in a results directory.
    Report { dir: PathBuf },
}

/// Builds the global worker pool from `ADVSHIFT_WORKERS` when set.
pub fn init_workers() {
    if let Ok(v) = std::env::var("ADVSHIFT_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let cfg: GenerateConfig = configs::load_config(&config)?;
            commands::cmd_generate(cfg, out, seed)
        }
        Command::Train {
            config,
            seed,
            out,
            runs,
            resume,
        } => {
            let cfg: TrainCmdConfig = configs::load_config(&config)?;
            commands::cmd_train(cfg, seed, out, runs, resume)
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            out,
        } => commands::cmd_evaluate(&checkpoint, &dataset, out),
        Command::Fd {
            checkpoint,
            dataset_a,
            dataset_b,
            map_st,
            map_at,
            out,
        } => commands::cmd_fd(&checkpoint, &dataset_a, &dataset_b, map_st, map_at, out),
        Command::Sweep {
            preset,
            config,
            seed,
            out,
            runs,
        } => {
            let cfg: SweepConfig = configs::load_config(&config)?;
            commands::cmd_sweep(preset, cfg, seed, out, runs)
        }
        Command::Report { dir } => commands::cmd_report(&dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_display_formats() {
        assert_eq!(epsilon_display(0.0), "0");
        assert_eq!(epsilon_display(1.0 / 255.0), "1/255");
        assert_eq!(epsilon_display(2.0 / 255.0), "2/255");
        assert_eq!(epsilon_display(0.5 / 255.0), "0.5/255");
    }

    #[test]
    fn cli_parses_all_subcommands() {
        use clap::Parser;
        for args in [
            vec!["advshift", "generate", "--config", "c.json"],
            vec!["advshift", "train", "--config", "c.json", "--runs", "1"],
            vec!["advshift", "evaluate", "ckpt.bin", "data/"],
            vec!["advshift", "fd", "ckpt.bin", "a/", "b/", "--map-st", "0.5"],
            vec![
                "advshift",
                "sweep",
                "--preset",
                "beta-sweep",
                "--config",
                "c.json",
            ],
            vec!["advshift", "report", "out/"],
        ] {
            Cli::try_parse_from(args).unwrap();
        }
    }

    #[test]
    fn unknown_preset_is_a_usage_error() {
        use clap::Parser;
        match Cli::try_parse_from(vec![
            "advshift",
            "sweep",
            "--preset",
            "nope",
            "--config",
            "c.json",
        ]) {
            Ok(_) => panic!("unknown preset should not parse"),
            Err(err) => assert_eq!(err.exit_code(), 2),
        }
    }
}
