//! Hyperspectral cubes, ground-truth maps, and the preprocessing chain
//! (PCA reduction, patch extraction, stratified splitting).

mod format;
mod patches;
mod pca;
mod synth;

pub use format::{load_dataset, save_dataset, DatasetHeader};
pub use patches::{extract_patches, stratified_split, PatchSet};
pub use pca::{pca_apply, pca_fit, PcaModel};
pub use synth::{class_signature, synth_generate};

use crate::error::{Error, LoadError, Result};
use crate::tensor::Tensor;

/// Spectral cube stored as `height × width × bands`, band fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    width: usize,
    height: usize,
    bands: usize,
    values: Tensor,
}

impl HsiCube {
    pub fn new(width: usize, height: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::param(format!(
                "cube dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("cube contains non-finite values"));
        }
        let values = Tensor::new(&[height, width, bands], values)?;
        Ok(HsiCube {
            width,
            height,
            bands,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.values.data()[start..start + self.bands]
    }

    /// All pixel spectra in row-major pixel order.
    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.data().chunks_exact(self.bands)
    }
}

/// Per-pixel ground truth: 0 is unlabeled, `1..=classes` are classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    classes: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, classes: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(format!(
                "label map {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        if classes == 0 {
            return Err(Error::param("class count must be at least 1"));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize > classes) {
            return Err(LoadError::LabelOutOfRange {
                label: labels[i],
                classes,
                row: i / width,
                col: i % width,
            }
            .into());
        }
        Ok(LabelMap {
            width,
            height,
            classes,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Pixel count per class; index 0 holds the unlabeled count.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub(crate) fn matches(&self, cube: &HsiCube) -> Result<()> {
        if self.width != cube.width() || self.height != cube.height() {
            return Err(Error::shape(format!(
                "label map {}x{} does not match cube {}x{}",
                self.width,
                self.height,
                cube.width(),
                cube.height()
            )));
        }
        Ok(())
    }
}
