//! A second, deliberately plain implementation of the network loss, generic
//! over the scalar type. The gradient checker differentiates it numerically
//! in double-double arithmetic; it shares no kernels with the main forward
//! pass.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use super::model::{ArchConfig, HssnbModel};
use crate::dd::Dd;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn sigmoid(self) -> Self {
        let one = Self::from_f64(1.0);
        one / (one + (-self).exp())
    }

    fn relu(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

impl Scalar for Dd {
    fn from_f64(v: f64) -> Self {
        Dd::from(v)
    }
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    fn ln(self) -> Self {
        Dd::ln(self)
    }
    fn tanh(self) -> Self {
        Dd::tanh(self)
    }
}

/// Parameters (declaration order), input, dropout multipliers and target,
/// all converted to `T`.
#[derive(Clone, Debug)]
pub struct Reference<T> {
    arch: ArchConfig,
    pub params: Vec<Vec<T>>,
    patch: Vec<T>,
    mask: Option<Vec<T>>,
    target: Vec<T>,
}

/// Where the perturbed parameter sits, i.e. how much of the forward pass
/// has to be recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Conv,
    FirstRecurrent,
    Tail,
}

impl<T: Scalar> Reference<T> {
    pub fn new(model: &HssnbModel, patch: &[f64], mask: Option<&[f64]>, target: &[f64]) -> Self {
        let conv = |v: &[f64]| v.iter().map(|&x| T::from_f64(x)).collect::<Vec<T>>();
        Reference {
            arch: model.arch().clone(),
            params: model.parameters().iter().map(|t| conv(t.data())).collect(),
            patch: conv(patch),
            mask: mask.map(conv),
            target: conv(target),
        }
    }

    fn lstm_tensors(&self) -> usize {
        if self.arch.peepholes {
            15
        } else {
            12
        }
    }

    pub fn stage(&self, tensor: usize) -> Stage {
        if tensor < 10 {
            Stage::Conv
        } else if tensor < 10 + 2 * self.lstm_tensors() {
            Stage::FirstRecurrent
        } else {
            Stage::Tail
        }
    }

    /// Conv stack output as a `steps × features` sequence.
    pub fn conv_sequence(&self) -> (Vec<T>, usize) {
        let a = &self.arch;
        let (mut h, mut w, mut d, mut c) = (a.window, a.window, a.bands, 1);
        let mut x = self.patch.clone();
        for i in 0..3 {
            let f = a.conv3d_filters[i];
            let [kh, kw, kd] = a.conv3d_kernels[i];
            let (k, b) = (&self.params[2 * i], &self.params[2 * i + 1]);
            let (oh, ow, od) = (h - kh + 1, w - kw + 1, d - kd + 1);
            let mut out = vec![T::zero(); oh * ow * od * f];
            for i0 in 0..oh {
                for i1 in 0..ow {
                    for i2 in 0..od {
                        for fi in 0..f {
                            let mut acc = b[fi];
                            for p in 0..kh {
                                for q in 0..kw {
                                    for r in 0..kd {
                                        for ch in 0..c {
                                            let kv = k[(((fi * kh + p) * kw + q) * kd + r) * c + ch];
                                            let xv = x[(((i0 + p) * w + i1 + q) * d + i2 + r) * c + ch];
                                            acc += kv * xv;
                                        }
                                    }
                                }
                            }
                            out[((i0 * ow + i1) * od + i2) * f + fi] = acc.relu();
                        }
                    }
                }
            }
            (h, w, d, c, x) = (oh, ow, od, f, out);
        }
        // depth and filters merge into channels without moving data
        let mut c = d * c;
        for i in 0..2 {
            let f = a.conv2d_filters[i];
            let [kh, kw] = a.conv2d_kernels[i];
            let (k, b) = (&self.params[6 + 2 * i], &self.params[7 + 2 * i]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let mut out = vec![T::zero(); oh * ow * f];
            for i0 in 0..oh {
                for i1 in 0..ow {
                    for fi in 0..f {
                        let mut acc = b[fi];
                        for p in 0..kh {
                            for q in 0..kw {
                                for ch in 0..c {
                                    acc += k[((fi * kh + p) * kw + q) * c + ch] * x[((i0 + p) * w + i1 + q) * c + ch];
                                }
                            }
                        }
                        out[(i0 * ow + i1) * f + fi] = acc.relu();
                    }
                }
            }
            (h, w, c, x) = (oh, ow, f, out);
        }
        (x, h)
    }

    fn lstm(&self, p: &[Vec<T>], seq: &[T], steps: usize) -> Vec<T> {
        let h = self.arch.hidden;
        let n = seq.len() / steps;
        let mut o = vec![T::zero(); h];
        let mut c = vec![T::zero(); h];
        let mut outputs = Vec::with_capacity(steps * h);
        for t in 0..steps {
            let x = &seq[t * n..(t + 1) * n];
            let pre = |g: usize, k: usize| {
                let (wm, rm, b) = (&p[3 * g], &p[3 * g + 1], &p[3 * g + 2]);
                let mut acc = b[k];
                for j in 0..n {
                    acc += wm[k * n + j] * x[j];
                }
                for j in 0..h {
                    acc += rm[k * h + j] * o[j];
                }
                acc
            };
            let mut c_new = vec![T::zero(); h];
            let mut o_new = vec![T::zero(); h];
            for k in 0..h {
                let (mut pi, mut pf, mut po) = (pre(1, k), pre(2, k), pre(3, k));
                if self.arch.peepholes {
                    pi += p[12][k] * c[k];
                    pf += p[13][k] * c[k];
                }
                c_new[k] = pre(0, k).tanh() * pi.sigmoid() + c[k] * pf.sigmoid();
                if self.arch.peepholes {
                    po += p[14][k] * c_new[k];
                }
                o_new[k] = c_new[k].tanh() * po.sigmoid();
            }
            outputs.extend_from_slice(&o_new);
            (o, c) = (o_new, c_new);
        }
        outputs
    }

    /// Both directions; `last` selects final-step concatenation instead of
    /// the per-step sequence.
    fn bidirectional(&self, first_tensor: usize, seq: &[T], steps: usize, last: bool) -> Vec<T> {
        let l = self.lstm_tensors();
        let fwd_p = &self.params[first_tensor..first_tensor + l];
        let bwd_p = &self.params[first_tensor + l..first_tensor + 2 * l];
        let n = seq.len() / steps;
        let reversed: Vec<T> = (0..steps).rev().flat_map(|t| seq[t * n..(t + 1) * n].to_vec()).collect();
        let fwd = self.lstm(fwd_p, seq, steps);
        let bwd = self.lstm(bwd_p, &reversed, steps);
        let h = self.arch.hidden;
        if last {
            let mut out = fwd[(steps - 1) * h..].to_vec();
            out.extend_from_slice(&bwd[(steps - 1) * h..]);
            out
        } else {
            let mut out = Vec::with_capacity(steps * 2 * h);
            for t in 0..steps {
                out.extend_from_slice(&fwd[t * h..(t + 1) * h]);
                out.extend_from_slice(&bwd[(steps - 1 - t) * h..(steps - t) * h]);
            }
            out
        }
    }

    /// Output of the first recurrent layer after dropout.
    pub fn recurrent_sequence(&self, seq: &[T], steps: usize) -> Vec<T> {
        let mut out = self.bidirectional(10, seq, steps, false);
        if let Some(m) = &self.mask {
            for (v, &k) in out.iter_mut().zip(m) {
                *v = *v * k;
            }
        }
        out
    }

    pub fn loss_from_recurrent(&self, seq: &[T], steps: usize) -> T {
        let features = self.bidirectional(10 + 2 * self.lstm_tensors(), seq, steps, true);
        let (wm, b) = (&self.params[self.params.len() - 2], &self.params[self.params.len() - 1]);
        let m = features.len();
        let logits: Vec<T> = (0..b.len())
            .map(|i| {
                let mut acc = b[i];
                for j in 0..m {
                    acc += wm[i * m + j] * features[j];
                }
                acc
            })
            .collect();
        let mut max = logits[0];
        for &z in &logits {
            if z > max {
                max = z;
            }
        }
        let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
        let mut total = T::zero();
        for &e in &exps {
            total += e;
        }
        let clamp = T::from_f64(super::dense::LOG_CLAMP);
        let mut loss = T::zero();
        for (e, &y) in exps.iter().zip(&self.target) {
            if y != T::zero() {
                let p = *e / total;
                let p = if p > clamp { p } else { clamp };
                loss += -(y * p.ln());
            }
        }
        loss
    }

    pub fn loss(&self) -> T {
        let (seq, steps) = self.conv_sequence();
        self.loss_from_recurrent(&self.recurrent_sequence(&seq, steps), steps)
    }
}
