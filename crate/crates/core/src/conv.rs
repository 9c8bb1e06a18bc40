//! Valid (unpadded), stride-1 3-D and 2-D convolutions with their adjoints,
//! plus the two reshape adapters that connect the conv stack to the
//! recurrent layers.
//!
//! Layouts (row-major):
//! - 3-D input `H × W × D × C`, kernels `F × kH × kW × kD × C`
//! - 2-D input `H × W × C`, kernels `F × kH × kW × C`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{axpy, dot, glorot_init, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative at pre-activation `x`; relu'(0) is taken as 0.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Output of a backward pass through a conv layer.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// What forward keeps for backward.
#[derive(Clone, Debug)]
pub struct ConvCache {
    input: Tensor,
    pre_activation: Tensor,
}

impl ConvCache {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn pre_activation(&self) -> &Tensor {
        &self.pre_activation
    }
}

fn activation_grad(act: Activation, cache: &ConvCache, upstream: &Tensor) -> Result<Vec<f64>> {
    if upstream.shape() != cache.pre_activation.shape() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match layer output {:?}",
            upstream.shape(),
            cache.pre_activation.shape()
        )));
    }
    Ok(upstream
        .data()
        .iter()
        .zip(cache.pre_activation.data())
        .map(|(&g, &x)| g * act.derivative(x))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dLayer {
    kernels: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl Conv3dLayer {
    pub fn new(kernels: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if kernels.rank() != 5 || bias.shape() != [kernels.shape()[0]] {
            return Err(Error::shape(format!(
                "conv3d kernels {:?} / bias {:?}",
                kernels.shape(),
                bias.shape()
            )));
        }
        Ok(Conv3dLayer {
            kernels,
            bias,
            activation,
        })
    }

    /// Glorot-uniform kernels, zero bias.
    pub fn init(
        filters: usize,
        kernel: [usize; 3],
        in_channels: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let [kh, kw, kd] = kernel;
        let volume = kh * kw * kd;
        let kernels = glorot_init(
            &[filters, kh, kw, kd, in_channels],
            volume * in_channels,
            volume * filters,
            rng,
        );
        Conv3dLayer {
            kernels,
            bias: Tensor::zeros(&[filters]),
            activation,
        }
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_dims(&self) -> [usize; 3] {
        let s = self.kernels.shape();
        [s[1], s[2], s[3]]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[4]
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.kernels, &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 4]> {
        let [kh, kw, kd] = self.kernel_dims();
        if input.len() != 4 || input[3] != self.in_channels() {
            return Err(Error::shape(format!(
                "conv3d expects H×W×D×{} input, got {input:?}",
                self.in_channels()
            )));
        }
        if input[0] < kh || input[1] < kw || input[2] < kd {
            return Err(Error::shape(format!(
                "conv3d kernel {kh}×{kw}×{kd} larger than input {input:?}"
            )));
        }
        Ok([input[0] - kh + 1, input[1] - kw + 1, input[2] - kd + 1, self.filters()])
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ConvCache)> {
        let [oh, ow, od, nf] = self.output_shape(input.shape())?;
        let [kh, kw, kd] = self.kernel_dims();
        let (w_in, d_in, c) = (input.shape()[1], input.shape()[2], input.shape()[3]);
        let x = input.data();
        let k = self.kernels.data();
        let b = self.bias.data();

        let mut pre = vec![0.0; oh * ow * od * nf];
        for a in 0..oh {
            for bb in 0..ow {
                for cc in 0..od {
                    let out = &mut pre[((a * ow + bb) * od + cc) * nf..][..nf];
                    for (f, o) in out.iter_mut().enumerate() {
                        let mut acc = b[f];
                        for p in 0..kh {
                            for q in 0..kw {
                                let x_row = ((a + p) * w_in + (bb + q)) * d_in;
                                let k_row = ((f * kh + p) * kw + q) * kd;
                                for r in 0..kd {
                                    let xs = &x[(x_row + cc + r) * c..][..c];
                                    let ks = &k[(k_row + r) * c..][..c];
                                    acc += dot(ks, xs);
                                }
                            }
                        }
                        *o = acc;
                    }
                }
            }
        }
        let pre = Tensor::new(&[oh, ow, od, nf], pre)?;
        let out = pre.map(|v| self.activation.apply(v));
        Ok((
            out,
            ConvCache {
                input: input.clone(),
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(&self, cache: &ConvCache, upstream: &Tensor) -> Result<ConvGrads> {
        let delta = activation_grad(self.activation, cache, upstream)?;
        let input = &cache.input;
        let [oh, ow, od, nf] = self.output_shape(input.shape())?;
        let [kh, kw, kd] = self.kernel_dims();
        let (w_in, d_in, c) = (input.shape()[1], input.shape()[2], input.shape()[3]);
        let x = input.data();
        let k = self.kernels.data();

        let mut dx = vec![0.0; x.len()];
        let mut dk = vec![0.0; k.len()];
        let mut db = vec![0.0; nf];
        for a in 0..oh {
            for bb in 0..ow {
                for cc in 0..od {
                    let g_row = &delta[((a * ow + bb) * od + cc) * nf..][..nf];
                    for (f, &g) in g_row.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        db[f] += g;
                        for p in 0..kh {
                            for q in 0..kw {
                                let x_row = ((a + p) * w_in + (bb + q)) * d_in;
                                let k_row = ((f * kh + p) * kw + q) * kd;
                                for r in 0..kd {
                                    let xo = (x_row + cc + r) * c;
                                    let ko = (k_row + r) * c;
                                    axpy(g, &x[xo..xo + c], &mut dk[ko..ko + c]);
                                    axpy(g, &k[ko..ko + c], &mut dx[xo..xo + c]);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::new(input.shape(), dx)?,
            kernels: Tensor::new(self.kernels.shape(), dk)?,
            bias: Tensor::new(&[nf], db)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dLayer {
    kernels: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl Conv2dLayer {
    pub fn new(kernels: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if kernels.rank() != 4 || bias.shape() != [kernels.shape()[0]] {
            return Err(Error::shape(format!(
                "conv2d kernels {:?} / bias {:?}",
                kernels.shape(),
                bias.shape()
            )));
        }
        Ok(Conv2dLayer {
            kernels,
            bias,
            activation,
        })
    }

    pub fn init(
        filters: usize,
        kernel: [usize; 2],
        in_channels: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let [kh, kw] = kernel;
        let area = kh * kw;
        let kernels = glorot_init(
            &[filters, kh, kw, in_channels],
            area * in_channels,
            area * filters,
            rng,
        );
        Conv2dLayer {
            kernels,
            bias: Tensor::zeros(&[filters]),
            activation,
        }
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_dims(&self) -> [usize; 2] {
        [self.kernels.shape()[1], self.kernels.shape()[2]]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.kernels, &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [kh, kw] = self.kernel_dims();
        if input.len() != 3 || input[2] != self.in_channels() {
            return Err(Error::shape(format!(
                "conv2d expects H×W×{} input, got {input:?}",
                self.in_channels()
            )));
        }
        if input[0] < kh || input[1] < kw {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}×{kw} larger than input {input:?}"
            )));
        }
        Ok([input[0] - kh + 1, input[1] - kw + 1, self.filters()])
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ConvCache)> {
        let [oh, ow, nf] = self.output_shape(input.shape())?;
        let [kh, kw] = self.kernel_dims();
        let (w_in, c) = (input.shape()[1], input.shape()[2]);
        let x = input.data();
        let k = self.kernels.data();
        let b = self.bias.data();

        let mut pre = vec![0.0; oh * ow * nf];
        for a in 0..oh {
            for bb in 0..ow {
                let out = &mut pre[(a * ow + bb) * nf..][..nf];
                for (f, o) in out.iter_mut().enumerate() {
                    let mut acc = b[f];
                    for p in 0..kh {
                        // one kernel row spans kw·c contiguous input values
                        let xs = &x[((a + p) * w_in + bb) * c..][..kw * c];
                        let ks = &k[(f * kh + p) * kw * c..][..kw * c];
                        acc += dot(ks, xs);
                    }
                    *o = acc;
                }
            }
        }
        let pre = Tensor::new(&[oh, ow, nf], pre)?;
        let out = pre.map(|v| self.activation.apply(v));
        Ok((
            out,
            ConvCache {
                input: input.clone(),
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(&self, cache: &ConvCache, upstream: &Tensor) -> Result<ConvGrads> {
        let delta = activation_grad(self.activation, cache, upstream)?;
        let input = &cache.input;
        let [oh, ow, nf] = self.output_shape(input.shape())?;
        let [kh, kw] = self.kernel_dims();
        let (w_in, c) = (input.shape()[1], input.shape()[2]);
        let x = input.data();
        let k = self.kernels.data();

        let mut dx = vec![0.0; x.len()];
        let mut dk = vec![0.0; k.len()];
        let mut db = vec![0.0; nf];
        let span = kw * c;
        for a in 0..oh {
            for bb in 0..ow {
                let g_row = &delta[(a * ow + bb) * nf..][..nf];
                for (f, &g) in g_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    db[f] += g;
                    for p in 0..kh {
                        let xo = ((a + p) * w_in + bb) * c;
                        let ko = (f * kh + p) * span;
                        axpy(g, &x[xo..xo + span], &mut dk[ko..ko + span]);
                        axpy(g, &k[ko..ko + span], &mut dx[xo..xo + span]);
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::new(input.shape(), dx)?,
            kernels: Tensor::new(self.kernels.shape(), dk)?,
            bias: Tensor::new(&[nf], db)?,
        })
    }
}

/// `H × W × D × F → H × W × (D·F)`; element `(i, j, d, f)` moves to
/// `(i, j, d·F + f)`, which leaves the flat buffer untouched.
pub fn reshape_3d_to_2d(input: Tensor) -> Result<Tensor> {
    let s = input.shape().to_vec();
    if s.len() != 4 {
        return Err(Error::shape(format!("expected rank-4 input, got {s:?}")));
    }
    input.reshape(&[s[0], s[1], s[2] * s[3]])
}

/// Inverse of [`reshape_3d_to_2d`].
pub fn reshape_2d_to_3d(input: Tensor, depth: usize, filters: usize) -> Result<Tensor> {
    let s = input.shape().to_vec();
    if s.len() != 3 || s[2] != depth * filters {
        return Err(Error::shape(format!(
            "cannot split {s:?} into depth {depth} × filters {filters}"
        )));
    }
    input.reshape(&[s[0], s[1], depth, filters])
}

/// `H × W × F → H × (W·F)`: row `i` becomes timestep `i`, element
/// `(i, j, f)` lands at feature `j·F + f`.
pub fn reshape_2d_to_seq(input: Tensor) -> Result<Tensor> {
    let s = input.shape().to_vec();
    if s.len() != 3 {
        return Err(Error::shape(format!("expected rank-3 input, got {s:?}")));
    }
    input.reshape(&[s[0], s[1] * s[2]])
}

/// Inverse of [`reshape_2d_to_seq`].
pub fn reshape_seq_to_2d(input: Tensor, width: usize, filters: usize) -> Result<Tensor> {
    let s = input.shape().to_vec();
    if s.len() != 2 || s[1] != width * filters {
        return Err(Error::shape(format!(
            "cannot split {s:?} into width {width} × filters {filters}"
        )));
    }
    input.reshape(&[s[0], width, filters])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
    }

    /// Direct transcription of the 3-D convolution sum, one output at a time.
    fn conv3d_oracle(layer: &Conv3dLayer, x: &Tensor) -> Tensor {
        let k = layer.kernels();
        let [kh, kw, kd] = layer.kernel_dims();
        let s = x.shape();
        let (oh, ow, od, nf) = (s[0] - kh + 1, s[1] - kw + 1, s[2] - kd + 1, layer.filters());
        let mut out = Tensor::zeros(&[oh, ow, od, nf]);
        for a in 0..oh {
            for b in 0..ow {
                for c in 0..od {
                    for f in 0..nf {
                        let mut v = layer.bias().get(&[f]);
                        for p in 0..kh {
                            for q in 0..kw {
                                for r in 0..kd {
                                    for m in 0..s[3] {
                                        v += k.get(&[f, p, q, r, m]) * x.get(&[a + p, b + q, c + r, m]);
                                    }
                                }
                            }
                        }
                        out.set(&[a, b, c, f], layer.activation().apply(v));
                    }
                }
            }
        }
        out
    }

    fn conv2d_oracle(layer: &Conv2dLayer, x: &Tensor) -> Tensor {
        let k = layer.kernels();
        let [kh, kw] = layer.kernel_dims();
        let s = x.shape();
        let (oh, ow, nf) = (s[0] - kh + 1, s[1] - kw + 1, layer.filters());
        let mut out = Tensor::zeros(&[oh, ow, nf]);
        for a in 0..oh {
            for b in 0..ow {
                for f in 0..nf {
                    let mut v = layer.bias().get(&[f]);
                    for p in 0..kh {
                        for q in 0..kw {
                            for m in 0..s[2] {
                                v += k.get(&[f, p, q, m]) * x.get(&[a + p, b + q, m]);
                            }
                        }
                    }
                    out.set(&[a, b, f], layer.activation().apply(v));
                }
            }
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    /// Central differences of `sum(weights ⊙ forward(·))` against every
    /// input, kernel and bias gradient.
    fn fd_check<L>(
        layer: &L,
        x: &Tensor,
        forward: impl Fn(&L, &Tensor) -> Tensor,
        backward: impl Fn(&L, &Tensor, &Tensor) -> ConvGrads,
        params: impl Fn(&mut L) -> [&mut Tensor; 2],
    ) where
        L: Clone,
    {
        let mut rng = Rng::new(99);
        let y = forward(layer, x);
        let weights = random(y.shape(), &mut rng);
        let loss = |l: &L, x: &Tensor| dot(forward(l, x).data(), weights.data());
        let grads = backward(layer, x, &weights);
        let eps = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);

        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let n = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * eps);
            assert!(rel(grads.input.data()[i], n) < 1e-6, "input[{i}]");
        }
        for (which, analytic) in [&grads.kernels, &grads.bias].into_iter().enumerate() {
            for i in 0..analytic.len() {
                let mut lp = layer.clone();
                params(&mut lp)[which].data_mut()[i] += eps;
                let mut lm = layer.clone();
                params(&mut lm)[which].data_mut()[i] -= eps;
                let n = (loss(&lp, x) - loss(&lm, x)) / (2.0 * eps);
                assert!(rel(analytic.data()[i], n) < 1e-6, "param {which}[{i}]");
            }
        }
    }

    #[test]
    fn table_conv3d_first_layer_shape() {
        let layer = Conv3dLayer::init(8, [3, 3, 7], 1, Activation::Relu, &mut Rng::new(0));
        assert_eq!(layer.output_shape(&[25, 25, 30, 1]).unwrap(), [23, 23, 24, 8]);
        assert_eq!(layer.parameter_count(), 512);
    }

    #[test]
    fn all_ones_sums_kernel_volume() {
        let layer = Conv3dLayer::new(
            Tensor::ones(&[1, 3, 3, 7, 1]),
            Tensor::zeros(&[1]),
            Activation::Linear,
        )
        .unwrap();
        let (out, _) = layer.forward(&Tensor::ones(&[5, 6, 9, 1])).unwrap();
        assert_eq!(out.shape(), &[3, 4, 3, 1]);
        assert!(out.data().iter().all(|&v| v == 63.0));
    }

    #[test]
    fn conv3d_matches_loop_oracle() {
        let mut rng = Rng::new(1);
        for act in [Activation::Linear, Activation::Relu] {
            let mut layer = Conv3dLayer::init(3, [2, 2, 3], 2, act, &mut rng);
            layer.bias = random(&[3], &mut rng);
            let x = random(&[6, 6, 8, 2], &mut rng);
            let (out, _) = layer.forward(&x).unwrap();
            assert_close(&out, &conv3d_oracle(&layer, &x), 1e-6);
        }
    }

    #[test]
    fn conv3d_kernel_too_large() {
        let layer = Conv3dLayer::init(2, [3, 3, 7], 1, Activation::Relu, &mut Rng::new(0));
        assert!(matches!(layer.forward(&Tensor::zeros(&[5, 5, 6, 1])), Err(Error::Shape(_))));
    }

    #[test]
    fn conv3d_backward_identities() {
        let mut rng = Rng::new(2);
        let layer = Conv3dLayer::init(3, [2, 2, 2], 2, Activation::Linear, &mut rng);
        let x = random(&[4, 4, 4, 2], &mut rng);
        let (out, cache) = layer.forward(&x).unwrap();

        let zero = layer.backward(&cache, &Tensor::zeros(out.shape())).unwrap();
        assert!(zero.input.max_abs() == 0.0 && zero.kernels.max_abs() == 0.0 && zero.bias.max_abs() == 0.0);

        let up = random(out.shape(), &mut rng);
        let g = layer.backward(&cache, &up).unwrap();
        for f in 0..3 {
            let expect: f64 = up.data().iter().skip(f).step_by(3).sum();
            assert!((g.bias.data()[f] - expect).abs() < 1e-12);
        }
        assert!(layer.backward(&cache, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn conv3d_gradients_match_finite_differences() {
        let mut rng = Rng::new(3);
        for act in [Activation::Linear, Activation::Relu] {
            let mut layer = Conv3dLayer::init(2, [2, 3, 2], 2, act, &mut rng);
            layer.bias = random(&[2], &mut rng);
            let x = random(&[4, 4, 4, 2], &mut rng);
            fd_check(
                &layer,
                &x,
                |l, x| l.forward(x).unwrap().0,
                |l, x, up| {
                    let (_, cache) = l.forward(x).unwrap();
                    l.backward(&cache, up).unwrap()
                },
                |l| l.params_mut(),
            );
        }
    }

    #[test]
    fn table_conv2d_first_layer_shape() {
        let layer = Conv2dLayer::init(64, [3, 3], 576, Activation::Relu, &mut Rng::new(0));
        assert_eq!(layer.output_shape(&[19, 19, 576]).unwrap(), [17, 17, 64]);
        assert_eq!(layer.parameter_count(), 331_840);
    }

    #[test]
    fn conv2d_unit_kernel_selects_channel() {
        let mut k = Tensor::zeros(&[1, 1, 1, 3]);
        k.set(&[0, 0, 0, 1], 1.0);
        let layer = Conv2dLayer::new(k, Tensor::zeros(&[1]), Activation::Linear).unwrap();
        let x = random(&[4, 5, 3], &mut Rng::new(4));
        let (out, _) = layer.forward(&x).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(out.get(&[i, j, 0]), x.get(&[i, j, 1]));
            }
        }
    }

    #[test]
    fn conv2d_matches_loop_oracle() {
        let mut rng = Rng::new(5);
        for act in [Activation::Linear, Activation::Relu] {
            let mut layer = Conv2dLayer::init(2, [2, 2], 3, act, &mut rng);
            layer.bias = random(&[2], &mut rng);
            let x = random(&[5, 5, 3], &mut rng);
            let (out, _) = layer.forward(&x).unwrap();
            assert_close(&out, &conv2d_oracle(&layer, &x), 1e-6);
        }
    }

    #[test]
    fn conv2d_impulse_response_and_zero_upstream() {
        let mut rng = Rng::new(6);
        let layer = Conv2dLayer::init(2, [2, 3], 2, Activation::Linear, &mut rng);
        let x = random(&[5, 6, 2], &mut rng);
        let (out, cache) = layer.forward(&x).unwrap();

        let zero = layer.backward(&cache, &Tensor::zeros(out.shape())).unwrap();
        assert_eq!(zero.kernels.max_abs() + zero.input.max_abs() + zero.bias.max_abs(), 0.0);

        let mut impulse = Tensor::zeros(out.shape());
        impulse.set(&[1, 2, 1], 1.0);
        let g = layer.backward(&cache, &impulse).unwrap();
        for p in 0..2 {
            for q in 0..3 {
                for m in 0..2 {
                    assert_eq!(g.kernels.get(&[1, p, q, m]), x.get(&[1 + p, 2 + q, m]));
                    assert_eq!(g.kernels.get(&[0, p, q, m]), 0.0);
                }
            }
        }
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut rng = Rng::new(7);
        for act in [Activation::Linear, Activation::Relu] {
            let mut layer = Conv2dLayer::init(3, [2, 2], 2, act, &mut rng);
            layer.bias = random(&[3], &mut rng);
            let x = random(&[5, 4, 2], &mut rng);
            fd_check(
                &layer,
                &x,
                |l, x| l.forward(x).unwrap().0,
                |l, x, up| {
                    let (_, cache) = l.forward(x).unwrap();
                    l.backward(&cache, up).unwrap()
                },
                |l| l.params_mut(),
            );
        }
    }

    #[test]
    fn linear_layers_are_linear() {
        let mut rng = Rng::new(8);
        let l3 = Conv3dLayer::init(2, [2, 2, 2], 1, Activation::Linear, &mut rng);
        let l2 = Conv2dLayer::init(2, [2, 2], 2, Activation::Linear, &mut rng);
        let (a, b) = (1.7, -0.4);
        let x3 = random(&[4, 4, 4, 1], &mut rng);
        let y3 = random(&[4, 4, 4, 1], &mut rng);
        let combo = x3.scale(a).add(&y3.scale(b)).unwrap();
        let lhs = l3.forward(&combo).unwrap().0;
        let rhs = l3.forward(&x3).unwrap().0.scale(a).add(&l3.forward(&y3).unwrap().0.scale(b)).unwrap();
        assert_close(&lhs, &rhs, 1e-10);

        let x2 = random(&[4, 4, 2], &mut rng);
        let y2 = random(&[4, 4, 2], &mut rng);
        let combo = x2.scale(a).add(&y2.scale(b)).unwrap();
        let lhs = l2.forward(&combo).unwrap().0;
        let rhs = l2.forward(&x2).unwrap().0.scale(a).add(&l2.forward(&y2).unwrap().0.scale(b)).unwrap();
        assert_close(&lhs, &rhs, 1e-10);
    }

    #[test]
    fn table_parameter_counts() {
        let mut rng = Rng::new(0);
        let counts = [
            Conv3dLayer::init(8, [3, 3, 7], 1, Activation::Relu, &mut rng).parameter_count(),
            Conv3dLayer::init(16, [3, 3, 5], 8, Activation::Relu, &mut rng).parameter_count(),
            Conv3dLayer::init(32, [3, 3, 3], 16, Activation::Relu, &mut rng).parameter_count(),
            Conv2dLayer::init(64, [3, 3], 576, Activation::Relu, &mut rng).parameter_count(),
            Conv2dLayer::init(128, [3, 3], 64, Activation::Relu, &mut rng).parameter_count(),
        ];
        assert_eq!(counts, [512, 5776, 13856, 331_840, 73_856]);
    }

    #[test]
    fn reshape_3d_to_2d_index_map() {
        let t = Tensor::from_fn(&[19, 19, 18, 32], |i| i as f64);
        assert_eq!(reshape_3d_to_2d(t.clone()).unwrap().shape(), &[19, 19, 576]);

        let small = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64 * 0.5);
        let r = reshape_3d_to_2d(small.clone()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                for d in 0..4 {
                    for f in 0..5 {
                        assert_eq!(r.get(&[i, j, d * 5 + f]), small.get(&[i, j, d, f]));
                    }
                }
            }
        }
        assert_eq!(reshape_2d_to_3d(r, 4, 5).unwrap(), small);
    }

    #[test]
    fn reshape_2d_to_seq_index_map() {
        let t = Tensor::from_fn(&[15, 15, 128], |i| i as f64);
        let s = reshape_2d_to_seq(t.clone()).unwrap();
        assert_eq!(s.shape(), &[15, 1920]);
        for (i, j, f) in [(0, 0, 0), (3, 7, 100), (14, 14, 127), (9, 1, 5)] {
            assert_eq!(s.get(&[i, j * 128 + f]), t.get(&[i, j, f]));
        }
        let small = Tensor::from_fn(&[3, 4, 2], |i| (i * i) as f64);
        let s = reshape_2d_to_seq(small.clone()).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                for f in 0..2 {
                    assert_eq!(s.get(&[i, j * 2 + f]), small.get(&[i, j, f]));
                }
            }
        }
        assert_eq!(reshape_seq_to_2d(s, 4, 2).unwrap(), small);
    }
}
