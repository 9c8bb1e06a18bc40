use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::dense::cross_entropy_loss;
use super::model::HssnbModel;
use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Samples per gradient work unit. Gradients are summed inside a unit and
/// then across units in index order, whether or not units run in parallel,
/// so the result does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub train_fraction: f64,
    pub window: usize,
    pub pca_components: usize,
    pub seed: u64,
    /// Run every sample on the calling thread.
    pub serial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            train_fraction: 0.3,
            window: 25,
            pca_components: 30,
            seed: 0,
            serial: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.window % 2 == 0 {
            return Err(Error::param(format!("window must be odd, got {}", self.window)));
        }
        if self.pca_components == 0 {
            return Err(Error::param("PCA components must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }
}

/// Fixed fan-out of the top-level seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub split: u64,
    pub shuffle: u64,
    pub dropout: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        Seeds {
            init: seed.wrapping_add(1),
            split: seed.wrapping_add(2),
            shuffle: seed.wrapping_add(3),
            dropout: seed.wrapping_add(4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch.
    pub loss: f64,
    /// Fraction of training samples classified correctly during the epoch
    /// (dropout active).
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_accuracy\n");
        for e in &self.epochs {
            s += &format!("{},{:e},{:e}\n", e.epoch, e.loss, e.train_accuracy);
        }
        s
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

struct ChunkResult {
    grads: Vec<Tensor>,
    /// `(sample index, loss, correct)`
    samples: Vec<(usize, f64, bool)>,
}

fn chunk_gradients(
    model: &HssnbModel,
    set: &PatchSet,
    indices: &[usize],
    dropout: &Rng,
) -> Result<ChunkResult> {
    let mut grads = model.zero_grads();
    let mut samples = Vec::with_capacity(indices.len());
    for &i in indices {
        let mut rng = dropout.fork(i as u64);
        let (probs, cache) = model.forward(&set.patch_tensor(i), true, &mut rng)?;
        let (loss, d_logits) = cross_entropy_loss(&probs, &set.one_hot(i))?;
        for (acc, g) in grads.iter_mut().zip(model.backward(&cache, &d_logits)?) {
            acc.add_assign(&g)?;
        }
        let correct = probs.argmax() + 1 == set.label(i) as usize;
        samples.push((i, loss, correct));
    }
    Ok(ChunkResult { grads, samples })
}

/// Summed gradients of a batch plus per-sample results. `dropout` is the
/// stream for this epoch; each sample forks its own mask stream from it.
fn batch_gradients(
    model: &HssnbModel,
    set: &PatchSet,
    batch: &[usize],
    dropout: &Rng,
    serial: bool,
) -> Result<ChunkResult> {
    let chunks: Vec<&[usize]> = batch.chunks(GRAD_CHUNK).collect();
    let results: Vec<Result<ChunkResult>> = if serial {
        chunks.iter().map(|c| chunk_gradients(model, set, c, dropout)).collect()
    } else {
        chunks.par_iter().map(|c| chunk_gradients(model, set, c, dropout)).collect()
    };
    let mut iter = results.into_iter();
    let mut total = iter.next().expect("non-empty batch")?;
    for r in iter {
        let r = r?;
        for (acc, g) in total.grads.iter_mut().zip(&r.grads) {
            acc.add_assign(g)?;
        }
        total.samples.extend(r.samples);
    }
    Ok(total)
}

/// Mini-batch Adam on categorical cross-entropy with dropout active.
/// Each epoch visits the training set in a fresh seeded order. With
/// `config.serial` the result is a pure function of the inputs.
pub fn train(model: &mut HssnbModel, train_set: &PatchSet, config: &TrainConfig) -> Result<History> {
    train_with_callback(model, train_set, config, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_callback(
    model: &mut HssnbModel,
    train_set: &PatchSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_compatible(model, train_set)?;

    let seeds = config.seeds();
    let adam = config.adam();
    let mut state = AdamState::new(model.parameters());
    let mut shuffle = Rng::new(seeds.shuffle);
    let dropout_root = Rng::new(seeds.dropout);
    let n = train_set.len();
    let mut history = History::default();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle.shuffle(&mut order);
        let dropout = dropout_root.fork(epoch as u64);
        let mut losses = vec![0.0; n];
        let mut correct = vec![false; n];

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let result = batch_gradients(model, train_set, batch, &dropout, config.serial)?;
            let mut batch_loss = 0.0;
            for &(i, loss, ok) in &result.samples {
                losses[i] = loss;
                correct[i] = ok;
                batch_loss += loss;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() || result.grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<Tensor> = result.grads.iter().map(|g| g.scale(scale)).collect();
            adam_step(&mut model.parameters_mut(), &grads, &mut state, &adam)?;
            debug!("epoch {epoch} batch {} loss {batch_loss:.6}", b + 1);
        }

        // summed in sample order so the value does not depend on the shuffle
        let stats = EpochStats {
            epoch,
            loss: losses.iter().sum::<f64>() / n as f64,
            train_accuracy: correct.iter().filter(|&&c| c).count() as f64 / n as f64,
        };
        info!(
            "epoch {epoch}/{}: loss {:.5}, train accuracy {:.4}",
            config.epochs, stats.loss, stats.train_accuracy
        );
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(history)
}

fn check_compatible(model: &HssnbModel, set: &PatchSet) -> Result<()> {
    let a = model.arch();
    if set.window() != a.window || set.bands() != a.bands || set.classes() != a.classes {
        return Err(Error::param(format!(
            "patches are {w}×{w}×{b} with {c} classes, model expects {}×{}×{} with {} classes",
            a.window,
            a.window,
            a.bands,
            a.classes,
            w = set.window(),
            b = set.bands(),
            c = set.classes()
        )));
    }
    Ok(())
}

/// 1-based label with the highest probability; ties go to the lower class.
pub fn predict_patch(model: &HssnbModel, patch: &Tensor) -> Result<u16> {
    Ok(model.predict_proba(patch)?.argmax() as u16 + 1)
}

/// Predicted labels for every patch of `set`, processed `batch_size` at a
/// time. Patches are independent, so the partition does not change the
/// output.
pub fn predict(model: &HssnbModel, set: &PatchSet, batch_size: usize, serial: bool) -> Result<Vec<u16>> {
    if batch_size == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    let a = model.arch();
    if set.window() != a.window || set.bands() != a.bands {
        return Err(Error::shape(format!(
            "patches are {}×{}×{}, model expects {}×{}×{}",
            set.window(),
            set.window(),
            set.bands(),
            a.window,
            a.window,
            a.bands
        )));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let run = |batch: &[usize]| -> Result<Vec<u16>> {
        batch.iter().map(|&i| predict_patch(model, &set.patch_tensor(i))).collect()
    };
    let batches: Vec<Result<Vec<u16>>> = if serial {
        idx.chunks(batch_size).map(run).collect()
    } else {
        idx.par_chunks(batch_size).map(run).collect()
    };
    let mut out = Vec::with_capacity(set.len());
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}

/// Confusion matrix of predictions against the patch labels.
pub fn evaluate(model: &HssnbModel, set: &PatchSet, serial: bool) -> Result<ConfusionMatrix> {
    if set.classes() != model.classes() {
        return Err(Error::param(format!(
            "dataset has {} classes, model has {}",
            set.classes(),
            model.classes()
        )));
    }
    let predicted = predict(model, set, 64, serial)?;
    let mut cm = ConfusionMatrix::new(model.classes());
    for (&t, &p) in set.labels().iter().zip(&predicted) {
        cm.accumulate(t, p)?;
    }
    Ok(cm)
}
