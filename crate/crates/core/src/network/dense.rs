use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{glorot_init, matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Fully connected layer producing logits; softmax is applied by the model.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(format!(
                "dense weights {:?} / bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn init(input_dim: usize, outputs: usize, rng: &mut Rng) -> Self {
        DenseLayer {
            weights: glorot_init(&[outputs, input_dim], input_dim, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape() != [self.input_dim()] {
            return Err(Error::shape(format!(
                "dense expects a {}-vector, got {:?}",
                self.input_dim(),
                input.shape()
            )));
        }
        let mut out = self.bias.data().to_vec();
        matvec_acc(self.weights.data(), self.input_dim(), input.data(), &mut out);
        Ok(Tensor::vector(out))
    }

    pub fn backward(&self, input: &Tensor, d_logits: &Tensor) -> Result<DenseGrads> {
        if d_logits.shape() != [self.outputs()] || input.shape() != [self.input_dim()] {
            return Err(Error::shape("dense backward: gradient/input shape mismatch"));
        }
        let mut dw = vec![0.0; self.weights.len()];
        outer_acc(d_logits.data(), input.data(), &mut dw);
        let mut dx = vec![0.0; self.input_dim()];
        matvec_t_acc(self.weights.data(), self.input_dim(), d_logits.data(), &mut dx);
        Ok(DenseGrads {
            weights: Tensor::new(self.weights.shape(), dw)?,
            bias: d_logits.clone(),
            input: Tensor::vector(dx),
        })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Tensor::vector(exp.into_iter().map(|e| e / total).collect())
}

/// Probabilities are clamped here before the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Categorical cross-entropy `−Σ y·log p` and its gradient with respect to
/// the logits that produced `probs`, `p·Σy − y` (which is `p − y` for a
/// one-hot target and zero for an all-zero target).
pub fn cross_entropy_loss(probs: &Tensor, one_hot: &Tensor) -> Result<(f64, Tensor)> {
    if probs.shape() != one_hot.shape() || probs.rank() != 1 {
        return Err(Error::shape(format!(
            "cross-entropy: probs {:?} vs target {:?}",
            probs.shape(),
            one_hot.shape()
        )));
    }
    let y = one_hot.data();
    let loss = -probs
        .data()
        .iter()
        .zip(y)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(LOG_CLAMP).ln())
        .sum::<f64>();
    let mass: f64 = y.iter().sum();
    let grad = probs
        .data()
        .iter()
        .zip(y)
        .map(|(&p, &t)| p * mass - t)
        .collect();
    Ok((loss, Tensor::vector(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_loop_oracle() {
        let mut rng = Rng::new(1);
        assert_eq!(DenseLayer::init(128, 16, &mut rng).parameter_count(), 2064);
        assert_eq!(DenseLayer::init(128, 9, &mut rng).parameter_count(), 1161);

        let d = DenseLayer::init(5, 3, &mut rng);
        let x = Tensor::vector(vec![0.3, -1.0, 2.0, 0.5, -0.2]);
        let z = d.logits(&x).unwrap();
        for i in 0..3 {
            let mut acc = d.bias().data()[i];
            for j in 0..5 {
                acc += d.weights().get(&[i, j]) * x.data()[j];
            }
            assert!((z.data()[i] - acc).abs() < 1e-14);
        }
        let g = d.backward(&x, &Tensor::vector(vec![1.0, -2.0, 0.5])).unwrap();
        assert!((g.weights.get(&[1, 2]) - (-4.0)).abs() < 1e-15);
        let expected: f64 = (0..3).map(|i| d.weights().get(&[i, 4]) * [1.0, -2.0, 0.5][i]).sum();
        assert!((g.input.data()[4] - expected).abs() < 1e-14);
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&Tensor::zeros(&[16]));
        assert!(p.data().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));
        let big = softmax(&Tensor::vector(vec![1000.0, 999.0, -1000.0]));
        assert!(big.all_finite());
        assert!((big.sum() - 1.0).abs() < 1e-12);
        assert!(big.data()[0] > big.data()[1]);
    }

    #[test]
    fn loss_examples() {
        let uniform = Tensor::filled(&[16], 1.0 / 16.0);
        let mut y = Tensor::zeros(&[16]);
        y.data_mut()[3] = 1.0;
        let (l, _) = cross_entropy_loss(&uniform, &y).unwrap();
        assert!((l - 16f64.ln()).abs() < 1e-12);
        assert!((l - 2.7726).abs() < 1e-4);

        let (l, g) = cross_entropy_loss(&y, &y).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);

        let mut p = Tensor::filled(&[3], 0.5);
        p.data_mut()[2] = 0.0;
        let t = Tensor::vector(vec![0.0, 0.0, 1.0]);
        assert!((cross_entropy_loss(&p, &t).unwrap().0 - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        for trial in 0..50 {
            let n = 2 + trial % 7;
            let logits = Tensor::from_fn(&[n], |_| rng.uniform_range(-3.0, 3.0));
            let mut y = Tensor::zeros(&[n]);
            y.data_mut()[rng.below(n as u64) as usize] = 1.0;
            let f = |z: &Tensor| cross_entropy_loss(&softmax(z), &y).unwrap().0;
            let (_, g) = cross_entropy_loss(&softmax(&logits), &y).unwrap();
            let eps = 1e-6;
            for i in 0..n {
                let mut plus = logits.clone();
                plus.data_mut()[i] += eps;
                let mut minus = logits.clone();
                minus.data_mut()[i] -= eps;
                let numeric = (f(&plus) - f(&minus)) / (2.0 * eps);
                assert!((numeric - g.data()[i]).abs() < 1e-8, "{numeric} vs {}", g.data()[i]);
            }
        }
    }
}
