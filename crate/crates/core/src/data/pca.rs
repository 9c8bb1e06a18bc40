use nalgebra::{DMatrix, SymmetricEigen};

use super::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spectral PCA fitted on every pixel of a cube.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `bands × retained` with orthonormal columns, eigenvalue-descending.
    pub components: Tensor,
    pub explained_variance: Vec<f64>,
    /// Trace of the pixel covariance matrix.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn input_bands(&self) -> usize {
        self.mean.len()
    }

    pub fn retained(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Writes the `retained` scores of one spectrum into `out`.
    pub fn project_into(&self, spectrum: &[f64], out: &mut [f64]) {
        let s = self.retained();
        out.iter_mut().for_each(|o| *o = 0.0);
        let comps = self.components.data();
        for (b, (&x, &m)) in spectrum.iter().zip(&self.mean).enumerate() {
            let centered = x - m;
            for (o, &w) in out.iter_mut().zip(&comps[b * s..(b + 1) * s]) {
                *o += centered * w;
            }
        }
    }

    pub fn project(&self, spectrum: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.retained()];
        self.project_into(spectrum, &mut out);
        out
    }
}

/// Fits a `retained`-component PCA by exact eigendecomposition of the
/// `bands × bands` covariance matrix. Each component's largest-magnitude
/// entry is made positive.
pub fn pca_fit(cube: &HsiCube, retained: usize) -> Result<PcaModel> {
    let c = cube.bands();
    if retained == 0 || retained > c {
        return Err(Error::param(format!(
            "PCA components must be in 1..={c}, got {retained}"
        )));
    }
    let n = cube.pixel_count();
    if n < retained + 1 {
        return Err(Error::param(format!(
            "PCA with {retained} components needs at least {} pixels, cube has {n}",
            retained + 1
        )));
    }

    let mut mean = vec![0.0; c];
    for px in cube.pixels() {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; c * c];
    let mut centered = vec![0.0; c];
    for px in cube.pixels() {
        for ((d, v), m) in centered.iter_mut().zip(px).zip(&mean) {
            *d = v - m;
        }
        for i in 0..c {
            let di = centered[i];
            for j in i..c {
                cov[i * c + j] += di * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..c {
        for j in i..c {
            let v = cov[i * c + j] / denom;
            cov[i * c + j] = v;
            cov[j * c + i] = v;
        }
    }
    let total_variance = (0..c).map(|i| cov[i * c + i]).sum();

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(c, c, &cov));
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Tensor::zeros(&[c, retained]);
    let mut explained_variance = Vec::with_capacity(retained);
    for (k, &idx) in order.iter().take(retained).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..c).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..c {
            components.set(&[i, k], sign * v[i]);
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Projects every pixel; spatial dimensions are unchanged.
pub fn pca_apply(model: &PcaModel, cube: &HsiCube) -> Result<HsiCube> {
    if cube.bands() != model.input_bands() {
        return Err(Error::shape(format!(
            "PCA fitted on {} bands, cube has {}",
            model.input_bands(),
            cube.bands()
        )));
    }
    let s = model.retained();
    let mut values = vec![0.0; cube.pixel_count() * s];
    for (px, out) in cube.pixels().zip(values.chunks_exact_mut(s)) {
        model.project_into(px, out);
    }
    HsiCube::new(cube.width(), cube.height(), s, values)
}
