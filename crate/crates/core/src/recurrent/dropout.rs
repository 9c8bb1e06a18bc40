use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: during training each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 − rate)`.
/// Inference is the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
}

/// Per-element multipliers applied in forward (`None` means identity).
#[derive(Clone, Debug)]
pub struct DropoutMask(Option<Tensor>);

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(DropoutLayer { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&self, input: &Tensor, training: bool, rng: &mut Rng) -> (Tensor, DropoutMask) {
        if !training || self.rate == 0.0 {
            return (input.clone(), DropoutMask(None));
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mask = Tensor::from_fn(input.shape(), |_| {
            if rng.uniform() < self.rate {
                0.0
            } else {
                scale
            }
        });
        let out = input.hadamard(&mask).expect("mask has input shape");
        (out, DropoutMask(Some(mask)))
    }

    pub fn backward(&self, mask: &DropoutMask, upstream: &Tensor) -> Result<Tensor> {
        match &mask.0 {
            None => Ok(upstream.clone()),
            Some(m) => upstream.hadamard(m),
        }
    }
}

impl DropoutMask {
    pub fn multipliers(&self) -> Option<&Tensor> {
        self.0.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_and_zero_rate_are_identity() {
        let x = Tensor::from_fn(&[4, 5], |i| i as f64 - 7.0);
        let d = DropoutLayer::new(0.25).unwrap();
        assert_eq!(d.forward(&x, false, &mut Rng::new(0)).0, x);
        let d0 = DropoutLayer::new(0.0).unwrap();
        assert_eq!(d0.forward(&x, true, &mut Rng::new(0)).0, x);
        assert_eq!(d0.forward(&x, false, &mut Rng::new(0)).0, x);
    }

    #[test]
    fn expectation_preserved() {
        let d = DropoutLayer::new(0.25).unwrap();
        let x = Tensor::ones(&[1_000_000]);
        let (y, _) = d.forward(&x, true, &mut Rng::new(21));
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn backward_reuses_mask() {
        let d = DropoutLayer::new(0.5).unwrap();
        let x = Tensor::from_fn(&[50], |i| i as f64 + 1.0);
        let (y, mask) = d.forward(&x, true, &mut Rng::new(2));
        let up = Tensor::ones(&[50]);
        let g = d.backward(&mask, &up).unwrap();
        for i in 0..50 {
            assert_eq!(g.data()[i] * x.data()[i], y.data()[i]);
            assert!(g.data()[i] == 0.0 || g.data()[i] == 2.0);
        }
    }

    #[test]
    fn rejects_bad_rate() {
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }
}
