use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ArchPreset, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "hssnb", version, about = "Hybrid 3-D/2-D CNN + Bi-LSTM hyperspectral classifier")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat JSON config; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// PCA, patch extraction, split, training and test evaluation.
    Train(TrainArgs),
    /// Recompute test metrics for one or more checkpoints.
    Eval(EvalArgs),
    /// Write a PPM classification map.
    Map(MapArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate once per window size.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// WIDTHxHEIGHTxBANDS
    #[arg(long, default_value = "32x32x16", value_parser = parse_size)]
    pub size: (usize, usize, usize),
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u16).range(2..))]
    pub classes: u16,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

fn parse_size(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected WIDTHxHEIGHTxBANDS, got {s:?}"))?;
    match nums[..] {
        [w, h, b] if w > 0 && h > 0 && b > 0 => Ok((w, h, b)),
        _ => Err(format!("expected three positive sizes WIDTHxHEIGHTxBANDS, got {s:?}")),
    }
}

/// Training settings shared by `train` and `sweep`; unset flags keep the
/// config-file (or default) value.
#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchPreset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Spectral bands kept after PCA.
    #[arg(long, alias = "pca-components")]
    pub pca: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub peepholes: Option<Switch>,
    /// Deterministic single-threaded execution.
    #[arg(long)]
    pub serial: bool,
}

impl TrainFlags {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.arch {
            cfg.arch = v;
        }
        let t = &mut cfg.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.train_fraction {
            t.train_fraction = v;
        }
        if let Some(v) = self.window {
            t.window = v;
        }
        if let Some(v) = self.pca {
            t.pca_components = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if self.serial {
            t.serial = true;
        }
        if let Some(v) = self.peepholes {
            cfg.peepholes = v == Switch::On;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Independent repetitions (seed + 1000·run); results are reported as mean ± std.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "checkpoint", required = true, num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seed of the split generator; defaults to the one used in training.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Write the metrics JSON here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub serial: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GradcheckPreset {
    /// D=9, S=8, N=3, filters 2/4/8 and 8/16, 8 hidden, small kernels.
    Reduced,
    /// D=13, S=13 with the full-size kernels.
    PaperKernels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PeepholeModes {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    DoubleDouble,
    Double,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "reduced")]
    pub preset: GradcheckPreset,
    #[arg(long, value_enum, default_value = "both")]
    pub peepholes: PeepholeModes,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Arithmetic for evaluating the perturbed losses.
    #[arg(long, value_enum, default_value = "double-double")]
    pub precision: Precision,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub serial: bool,
    /// Write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Comma-separated window sizes.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
}
