use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dense::cross_entropy_loss;
use super::model::{build_model, ArchConfig, HssnbModel};
use super::reference::{Reference, Scalar, Stage};
use super::train::Seeds;
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Arithmetic used to evaluate the loss for finite differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericPrecision {
    /// Plain f64. Entries whose gradient is near 1e-9 are then dominated by
    /// rounding in the loss (about 1e-11 after dividing by 2ε).
    Double,
    /// Double-double (~32 digits), so the difference quotient carries only
    /// truncation error.
    DoubleDouble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Seed of the dropout mask, held fixed across all evaluations.
    pub dropout_seed: u64,
    pub serial: bool,
    pub precision: NumericPrecision,
    /// Scales one analytic gradient entry before comparison. Used to make
    /// sure the check can fail.
    pub corrupt: Option<Corruption>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            tolerance: 1e-4,
            dropout_seed: 0,
            serial: false,
            precision: NumericPrecision::DoubleDouble,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Full parameter name, e.g. `dense_1/weights`.
    pub tensor: String,
    /// Entry to corrupt; the largest-magnitude entry when `None`.
    pub index: Option<usize>,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

impl TensorCheck {
    /// Layer part of the name (`dense_1` for `dense_1/weights`).
    pub fn layer(&self) -> &str {
        self.name.split('/').next().unwrap_or(&self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub precision: NumericPrecision,
    /// |reference loss − model loss| at the unperturbed point; confirms the
    /// numerically differentiated function is the one being trained.
    pub loss_gap: f64,
    pub tensors: Vec<TensorCheck>,
}

/// Largest tolerated `loss_gap`.
pub const LOSS_GAP_LIMIT: f64 = 1e-10;

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.loss_gap < LOSS_GAP_LIMIT && self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed).collect()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_relative_error).fold(0.0, f64::max)
    }

    /// Worst error per layer, in forward order.
    pub fn per_layer(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for t in &self.tensors {
            match out.last_mut() {
                Some((name, e)) if name == t.layer() => *e = e.max(t.max_relative_error),
                _ => out.push((t.layer().to_string(), t.max_relative_error)),
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tensors {
            let _ = writeln!(
                s,
                "{:<40} {:>7} {:>12.3e}  {}",
                t.name,
                t.entries,
                t.max_relative_error,
                if t.passed { "ok" } else { "FAIL" }
            );
        }
        if self.loss_gap >= LOSS_GAP_LIMIT {
            let _ = writeln!(s, "reference loss differs from model loss by {:.3e}", self.loss_gap);
        }
        let _ = writeln!(
            s,
            "max relative error {:.3e} (tolerance {:.1e}): {}",
            self.max_relative_error(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Model, N(0, 1) input patch and one-hot target for a check seeded with
/// `seed`. Pair with `Seeds::derive(seed).dropout` as the dropout seed.
pub fn grad_check_case(arch: &ArchConfig, seed: u64) -> Result<(HssnbModel, Tensor, Tensor)> {
    let model = build_model(arch, &mut Rng::new(Seeds::derive(seed).init))?;
    let mut rng = Rng::new(seed).fork(7);
    let d = arch.window;
    let patch = Tensor::from_fn(&[d, d, arch.bands, 1], |_| rng.normal(0.0, 1.0));
    let mut target = Tensor::zeros(&[arch.classes]);
    target.data_mut()[rng.below(arch.classes as u64) as usize] = 1.0;
    Ok((model, patch, target))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central differences of the reference loss for every parameter entry.
fn numeric_gradients<T: Scalar>(reference: &Reference<T>, eps: f64, serial: bool) -> Vec<Vec<f64>> {
    let (seq, steps) = reference.conv_sequence();
    let recurrent = reference.recurrent_sequence(&seq, steps);
    let h = T::from_f64(eps);
    let two_h = T::from_f64(2.0 * eps);
    let eval = |r: &Reference<T>, stage: Stage| match stage {
        Stage::Conv => r.loss(),
        Stage::FirstRecurrent => r.loss_from_recurrent(&r.recurrent_sequence(&seq, steps), steps),
        Stage::Tail => r.loss_from_recurrent(&recurrent, steps),
    };
    let entry = |r: &mut Reference<T>, ti: usize, i: usize| {
        let stage = r.stage(ti);
        let theta = r.params[ti][i];
        r.params[ti][i] = theta + h;
        let plus = eval(r, stage);
        r.params[ti][i] = theta - h;
        let minus = eval(r, stage);
        r.params[ti][i] = theta;
        ((plus - minus) / two_h).to_f64()
    };
    (0..reference.params.len())
        .map(|ti| {
            let n = reference.params[ti].len();
            if serial {
                let mut r = reference.clone();
                (0..n).map(|i| entry(&mut r, ti, i)).collect()
            } else {
                (0..n)
                    .into_par_iter()
                    .map_init(|| reference.clone(), |r, i| entry(r, ti, i))
                    .collect()
            }
        })
        .collect()
}

/// Compares the analytic gradient of the cross-entropy loss against central
/// differences for every entry of every parameter tensor. Dropout stays
/// active with one fixed mask.
pub fn grad_check(
    model: &HssnbModel,
    patch: &Tensor,
    one_hot: &Tensor,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if one_hot.shape() != [model.classes()] {
        return Err(Error::shape(format!(
            "target has shape {:?}, model has {} classes",
            one_hot.shape(),
            model.classes()
        )));
    }
    if !(options.epsilon > 0.0) {
        return Err(Error::param("epsilon must be positive"));
    }
    let seed = options.dropout_seed;
    let (probs, cache) = model.forward(patch, true, &mut Rng::new(seed))?;
    let (_, d_logits) = cross_entropy_loss(&probs, one_hot)?;
    let mut analytic = model.backward(&cache, &d_logits)?;
    let names = model.parameter_names();

    if let Some(c) = &options.corrupt {
        let ti = names
            .iter()
            .position(|n| *n == c.tensor)
            .ok_or_else(|| Error::param(format!("no parameter named {}", c.tensor)))?;
        let g = &mut analytic[ti];
        let idx = c.index.unwrap_or_else(|| {
            (0..g.len()).fold(0, |best, i| if g.data()[i].abs() > g.data()[best].abs() { i } else { best })
        });
        if idx >= g.len() {
            return Err(Error::param(format!("{} has no entry {idx}", c.tensor)));
        }
        g.data_mut()[idx] *= c.factor;
    }

    let eps = options.epsilon;
    let mask = model
        .dropout
        .forward(&Tensor::zeros(cache.shapes[9].1.as_slice()), true, &mut Rng::new(seed))
        .1;
    let mask = mask.multipliers().map(|m| m.data().to_vec());
    let model_loss = cross_entropy_loss(&probs, one_hot)?.0;
    let flat_patch = patch.data();
    let (numeric, loss_gap) = match options.precision {
        NumericPrecision::Double => {
            let r = Reference::<f64>::new(model, flat_patch, mask.as_deref(), one_hot.data());
            ((numeric_gradients(&r, eps, options.serial)), (r.loss() - model_loss).abs())
        }
        NumericPrecision::DoubleDouble => {
            let r = Reference::<Dd>::new(model, flat_patch, mask.as_deref(), one_hot.data());
            (numeric_gradients(&r, eps, options.serial), (r.loss().to_f64() - model_loss).abs())
        }
    };

    let mut tensors = Vec::with_capacity(names.len());
    for (ti, name) in names.iter().enumerate() {
        let n = analytic[ti].len();
        let mut check = TensorCheck {
            name: name.clone(),
            entries: n,
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for (i, &num) in numeric[ti].iter().enumerate() {
            let a = analytic[ti].data()[i];
            let e = relative_error(a, num);
            // NaN never compares greater, so test it explicitly
            if e > check.max_relative_error || e.is_nan() && !check.max_relative_error.is_nan() {
                check.max_relative_error = e;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = num;
            }
        }
        check.passed = check.max_relative_error < options.tolerance;
        tensors.push(check);
    }
    Ok(GradCheckReport {
        epsilon: eps,
        tolerance: options.tolerance,
        precision: options.precision,
        loss_gap,
        tensors,
    })
}
