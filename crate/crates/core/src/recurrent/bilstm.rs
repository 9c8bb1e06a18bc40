use serde::{Deserialize, Serialize};

use super::lstm::{LstmCache, LstmParams};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What a bidirectional layer emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiMode {
    /// `T × 2·hidden`: forward and (re-reversed) backward outputs per step.
    Sequence,
    /// `2·hidden`: each direction's output after its last step.
    Last,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub mode: BiMode,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

#[derive(Clone, Debug)]
pub struct BiLstmGrads {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub input: Tensor,
}

/// Reverses the time (row) axis of a `T × n` matrix.
pub(crate) fn reverse_rows(t: &Tensor) -> Tensor {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let mut data = Vec::with_capacity(t.len());
    for r in (0..rows).rev() {
        data.extend_from_slice(&t.data()[r * cols..(r + 1) * cols]);
    }
    Tensor::new(t.shape(), data).expect("same shape")
}

impl BiLstmLayer {
    pub fn init(input_dim: usize, hidden: usize, mode: BiMode, peepholes: bool, rng: &mut Rng) -> Self {
        let forward = LstmParams::init(input_dim, hidden, peepholes, rng);
        let backward = LstmParams::init(input_dim, hidden, peepholes, rng);
        BiLstmLayer {
            forward,
            backward,
            mode,
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_width(&self) -> usize {
        2 * self.hidden()
    }

    pub fn parameter_count(&self) -> usize {
        self.forward.parameter_count() + self.backward.parameter_count()
    }

    pub fn output_shape(&self, steps: usize) -> Vec<usize> {
        match self.mode {
            BiMode::Sequence => vec![steps, self.output_width()],
            BiMode::Last => vec![self.output_width()],
        }
    }

    pub fn forward(&self, sequence: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        if sequence.rank() != 2 {
            return Err(Error::shape(format!(
                "bidirectional layer expects T×n sequence, got {:?}",
                sequence.shape()
            )));
        }
        let (fwd_out, fwd_cache) = self.forward.forward(sequence)?;
        let (bwd_out, bwd_cache) = self.backward.forward(&reverse_rows(sequence))?;
        let t_len = sequence.shape()[0];
        let h = self.hidden();

        let out = match self.mode {
            BiMode::Sequence => {
                let mut data = Vec::with_capacity(t_len * 2 * h);
                for t in 0..t_len {
                    data.extend_from_slice(&fwd_out.data()[t * h..(t + 1) * h]);
                    let rt = t_len - 1 - t;
                    data.extend_from_slice(&bwd_out.data()[rt * h..(rt + 1) * h]);
                }
                Tensor::new(&[t_len, 2 * h], data)?
            }
            BiMode::Last => {
                let last = (t_len - 1) * h;
                let mut data = fwd_out.data()[last..].to_vec();
                data.extend_from_slice(&bwd_out.data()[last..]);
                Tensor::vector(data)
            }
        };
        Ok((
            out,
            BiLstmCache {
                forward: fwd_cache,
                backward: bwd_cache,
            },
        ))
    }

    pub fn backward(&self, cache: &BiLstmCache, upstream: &Tensor) -> Result<BiLstmGrads> {
        let t_len = cache.forward.len();
        let h = self.hidden();
        if upstream.shape() != self.output_shape(t_len).as_slice() {
            return Err(Error::shape(format!(
                "bidirectional upstream {:?}, expected {:?}",
                upstream.shape(),
                self.output_shape(t_len)
            )));
        }
        // split the upstream into per-direction T×h gradients, in each
        // direction's own time order
        let mut up_fwd = vec![0.0; t_len * h];
        let mut up_bwd = vec![0.0; t_len * h];
        let u = upstream.data();
        match self.mode {
            BiMode::Sequence => {
                for t in 0..t_len {
                    let rt = t_len - 1 - t;
                    up_fwd[t * h..(t + 1) * h].copy_from_slice(&u[t * 2 * h..t * 2 * h + h]);
                    up_bwd[rt * h..(rt + 1) * h].copy_from_slice(&u[t * 2 * h + h..(t + 1) * 2 * h]);
                }
            }
            BiMode::Last => {
                let last = (t_len - 1) * h;
                up_fwd[last..].copy_from_slice(&u[..h]);
                up_bwd[last..].copy_from_slice(&u[h..]);
            }
        }
        let (g_fwd, dx_fwd) = self.forward.bptt(&cache.forward, &Tensor::new(&[t_len, h], up_fwd)?)?;
        let (g_bwd, dx_bwd) = self.backward.bptt(&cache.backward, &Tensor::new(&[t_len, h], up_bwd)?)?;
        let input = dx_fwd.add(&reverse_rows(&dx_bwd))?;
        Ok(BiLstmGrads {
            forward: g_fwd,
            backward: g_bwd,
            input,
        })
    }
}
