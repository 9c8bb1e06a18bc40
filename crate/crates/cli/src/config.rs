//! Flat JSON experiment configuration. Every training field sits at the top
//! level next to the dataset, output and sweep settings.

use std::fs;
use std::path::{Path, PathBuf};

use hssnb_core::network::{ArchConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    /// Filters 8/16/32 and 64/128, 64 hidden units, full-size kernels.
    Paper,
    /// Filters 4/8/16 and 16/32, 16 hidden units, 2×2×3 and 2×2 kernels.
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(flatten)]
    pub train: TrainConfig,
    pub arch: ArchPreset,
    pub peepholes: bool,
    pub runs: usize,
    pub windows: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            out: PathBuf::from("out"),
            train: TrainConfig::default(),
            arch: ArchPreset::Paper,
            peepholes: false,
            runs: 1,
            windows: vec![19, 21, 23, 25],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Network for `window` and the configured PCA size.
    pub fn arch_config(&self, window: usize, classes: usize) -> ArchConfig {
        let bands = self.train.pca_components;
        let mut arch = match self.arch {
            ArchPreset::Paper => ArchConfig {
                window,
                bands,
                ..ArchConfig::paper(classes)
            },
            ArchPreset::Reduced => ArchConfig::reduced(window, bands, classes),
        };
        arch.peepholes = self.peepholes;
        arch
    }

    pub fn data_dir(&self) -> Result<&Path, Failure> {
        self.data
            .as_deref()
            .ok_or_else(|| Failure::usage("no dataset given (use --data or the config file)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.data = Some("data/ip".into());
        cfg.train.epochs = 7;
        cfg.train.learning_rate = 3.5e-4;
        cfg.arch = ArchPreset::Reduced;
        cfg.windows = vec![9, 11];
        cfg.peepholes = true;
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flat_layout_and_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"epochs": 3, "window": 11, "arch": "reduced"}"#).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.window, 11);
        assert_eq!(cfg.train.pca_components, 30);
        assert_eq!(cfg.arch, ArchPreset::Reduced);
        let v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        assert!(v.get("learning_rate").is_some() && v.get("train").is_none());
    }

    #[test]
    fn defaults_mirror_full_size_input() {
        let cfg = ExperimentConfig::default();
        let arch = cfg.arch_config(cfg.train.window, 16);
        assert_eq!(arch, ArchConfig::paper(16));
        assert_eq!(arch.parameter_count().unwrap(), 1_543_040);
    }
}
