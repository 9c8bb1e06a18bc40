//! Dense row-major tensors and the small set of kernels the layers need.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense N-dimensional array of `f64`, row-major (last index fastest).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!(
            "dimensions must be positive, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = checked_len(shape).expect("tensor dimensions must be positive");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(&[n], data).expect("vector must be non-empty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(&[rows, cols], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len = checked_len(shape).expect("tensor dimensions must be positive");
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Relabels the shape without touching the flat buffer.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    fn require_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn outer(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 1 || other.rank() != 1 {
            return Err(Error::shape(format!(
                "outer: expected vectors, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, n) = (self.len(), other.len());
        let mut out = Vec::with_capacity(m * n);
        for &u in &self.data {
            out.extend(other.data.iter().map(|&v| u * v));
        }
        Tensor::new(&[m, n], out)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.require_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "transpose needs a matrix, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        Ok(Tensor::from_fn(&[n, m], |idx| {
            let (j, i) = (idx / m, idx % m);
            self.data[i * n + j]
        }))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// In-place `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.require_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest element; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }
}

/// Glorot/Xavier uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    assert!(fan_in >= 1 && fan_out >= 1, "fan counts must be positive");
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform_range(-limit, limit))
}

// Slice kernels used on the hot paths. They write into caller-provided
// buffers so the recurrent and dense layers avoid per-step allocation.

/// `out += m · x` for a row-major `rows × cols` matrix.
pub(crate) fn matvec_acc(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), out.len() * cols);
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += mᵀ · y` for a row-major `rows × cols` matrix.
pub(crate) fn matvec_t_acc(m: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), y.len() * cols);
    debug_assert_eq!(out.len(), cols);
    for (&yi, row) in y.iter().zip(m.chunks_exact(cols)) {
        if yi != 0.0 {
            axpy(yi, row, out);
        }
    }
}

/// `m += u ⊗ v` for a row-major `u.len() × v.len()` matrix.
pub(crate) fn outer_acc(u: &[f64], v: &[f64], m: &mut [f64]) {
    debug_assert_eq!(m.len(), u.len() * v.len());
    for (&ui, row) in u.iter().zip(m.chunks_exact_mut(v.len())) {
        if ui != 0.0 {
            axpy(ui, v, row);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let id = m(2, 2, &[1., 0., 0., 1.]);
        let b = m(2, 2, &[5., 6., 7., 8.]);
        assert_eq!(id.matmul(&b).unwrap(), b);

        let z = Tensor::zeros(&[2, 3]);
        let any = Tensor::from_fn(&[3, 4], |i| i as f64 - 3.5);
        assert_eq!(z.matmul(&any).unwrap(), Tensor::zeros(&[2, 4]));

        let a = m(2, 2, &[1., 2., 3., 4.]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let err = Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] x [2, 3]"), "{msg}");
    }

    #[test]
    fn outer_examples() {
        let e0 = Tensor::vector(vec![1., 0.]);
        let e1 = Tensor::vector(vec![0., 1.]);
        assert_eq!(e0.outer(&e1).unwrap().data(), &[0., 1., 0., 0.]);

        let v = Tensor::vector(vec![1., 2., 3., 4.]);
        assert_eq!(Tensor::zeros(&[3]).outer(&v).unwrap(), Tensor::zeros(&[3, 4]));

        let u = Tensor::vector(vec![2., 3.]);
        let w = Tensor::vector(vec![4., 5.]);
        assert_eq!(u.outer(&w).unwrap().data(), &[8., 10., 12., 15.]);

        assert!(Tensor::zeros(&[2, 2]).outer(&w).is_err());
    }

    #[test]
    fn hadamard_examples() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64 * 1.5 - 2.0);
        assert_eq!(a.hadamard(&Tensor::ones(&[2, 3])).unwrap(), a);
        assert_eq!(a.hadamard(&Tensor::zeros(&[2, 3])).unwrap(), Tensor::zeros(&[2, 3]));
        let x = Tensor::vector(vec![1., 2., 3.]);
        let y = Tensor::vector(vec![4., 5., 6.]);
        assert_eq!(x.hadamard(&y).unwrap().data(), &[4., 10., 18.]);
        assert!(x.hadamard(&Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = glorot_init(&[50, 40], 3, 3, &mut Rng::new(11));
        assert!(a.data().iter().all(|x| (-1.0..=1.0).contains(x)));
        let b = glorot_init(&[50, 40], 3, 3, &mut Rng::new(11));
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_mean_near_zero() {
        let t = glorot_init(&[100_000], 300, 300, &mut Rng::new(5));
        let mean = t.sum() / t.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::zeros(&[6]).reshape(&[4, 2]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(Tensor::vector(vec![0.25; 4]).argmax(), 0);
        assert_eq!(Tensor::vector(vec![0.1, 0.7, 0.7]).argmax(), 1);
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-2.0f64..2.0, rows * cols)
            .prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(a in arb_matrix(3, 4), b in arb_matrix(4, 2), c in arb_matrix(2, 5)) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn outer_equals_column_times_row(u in prop::collection::vec(-3.0f64..3.0, 1..6),
                                         v in prop::collection::vec(-3.0f64..3.0, 1..6)) {
            let (m, n) = (u.len(), v.len());
            let tu = Tensor::vector(u.clone());
            let tv = Tensor::vector(v.clone());
            let before = (tu.clone(), tv.clone());
            let outer = tu.outer(&tv).unwrap();
            let mm = Tensor::matrix(m, 1, u).unwrap().matmul(&Tensor::matrix(1, n, v).unwrap()).unwrap();
            prop_assert_eq!(outer, mm);
            // inputs untouched
            prop_assert_eq!((tu, tv), before);
        }
    }
}
