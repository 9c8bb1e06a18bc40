//! Peephole-capable LSTM cell and its backpropagation through time.
//!
//! Per timestep, with `x = i_t`, `h = o_{t−1}` and `σ` the logistic function:
//!
//! ```text
//! block  z̄ = W_ib x + R_ib h + b_ib                  z = tanh(z̄)
//! input  ī = W_ig x + R_ig h + p_ig ⊙ c_{t−1} + b_ig  i = σ(ī)
//! forget f̄ = W_fg x + R_fg h + p_fg ⊙ c_{t−1} + b_fg  f = σ(f̄)
//! cell   c_t = z ⊙ i + c_{t−1} ⊙ f
//! output ō = W_og x + R_og h + p_og ⊙ c_t + b_og      g = σ(ō)
//! o_t = tanh(c_t) ⊙ g
//! ```
//!
//! The output-gate peephole reads the current cell `c_t`. Peephole terms
//! are dropped entirely when the cell is built without them.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{glorot_init, matvec_acc, matvec_t_acc, outer_acc, Tensor};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Input weights, recurrent weights and bias for one gate.
#[derive(Clone, Debug, PartialEq)]
pub struct GateWeights {
    /// `hidden × input_dim`
    pub input: Tensor,
    /// `hidden × hidden`
    pub recurrent: Tensor,
    pub bias: Tensor,
}

impl GateWeights {
    fn init(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        GateWeights {
            input: glorot_init(&[hidden, input_dim], input_dim, 4 * hidden, rng),
            recurrent: glorot_init(&[hidden, hidden], hidden, 4 * hidden, rng),
            bias: Tensor::zeros(&[hidden]),
        }
    }

    fn zeros(input_dim: usize, hidden: usize) -> Self {
        GateWeights {
            input: Tensor::zeros(&[hidden, input_dim]),
            recurrent: Tensor::zeros(&[hidden, hidden]),
            bias: Tensor::zeros(&[hidden]),
        }
    }

    /// `pre = W x + R h + b`
    fn pre_activation(&self, x: &[f64], h: &[f64], input_dim: usize, hidden: usize) -> Vec<f64> {
        let mut pre = self.bias.data().to_vec();
        matvec_acc(self.input.data(), input_dim, x, &mut pre);
        matvec_acc(self.recurrent.data(), hidden, h, &mut pre);
        pre
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Peepholes {
    pub input_gate: Tensor,
    pub forget_gate: Tensor,
    pub output_gate: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub block: GateWeights,
    pub input_gate: GateWeights,
    pub forget_gate: GateWeights,
    pub output_gate: GateWeights,
    pub peepholes: Option<Peepholes>,
}

pub const GATE_NAMES: [&str; 4] = ["ib", "ig", "fg", "og"];

impl LstmParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(input_dim: usize, hidden: usize, peepholes: bool, rng: &mut Rng) -> Self {
        let block = GateWeights::init(input_dim, hidden, rng);
        let input_gate = GateWeights::init(input_dim, hidden, rng);
        let forget_gate = GateWeights::init(input_dim, hidden, rng);
        let output_gate = GateWeights::init(input_dim, hidden, rng);
        let peepholes = peepholes.then(|| Peepholes {
            input_gate: glorot_init(&[hidden], hidden, hidden, rng),
            forget_gate: glorot_init(&[hidden], hidden, hidden, rng),
            output_gate: glorot_init(&[hidden], hidden, hidden, rng),
        });
        LstmParams {
            block,
            input_gate,
            forget_gate,
            output_gate,
            peepholes,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, peepholes: bool) -> Self {
        LstmParams {
            block: GateWeights::zeros(input_dim, hidden),
            input_gate: GateWeights::zeros(input_dim, hidden),
            forget_gate: GateWeights::zeros(input_dim, hidden),
            output_gate: GateWeights::zeros(input_dim, hidden),
            peepholes: peepholes.then(|| Peepholes {
                input_gate: Tensor::zeros(&[hidden]),
                forget_gate: Tensor::zeros(&[hidden]),
                output_gate: Tensor::zeros(&[hidden]),
            }),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden(), self.has_peepholes())
    }

    pub fn hidden(&self) -> usize {
        self.block.input.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.block.input.shape()[1]
    }

    pub fn has_peepholes(&self) -> bool {
        self.peepholes.is_some()
    }

    pub fn gates(&self) -> [&GateWeights; 4] {
        [&self.block, &self.input_gate, &self.forget_gate, &self.output_gate]
    }

    /// `4·(hidden·input + hidden² + hidden)`, plus `3·hidden` with peepholes.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in declaration order: `W, R, b` for each gate
    /// (block input, input, forget, output), then the peepholes.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(15);
        for g in self.gates() {
            out.extend([&g.input, &g.recurrent, &g.bias]);
        }
        if let Some(p) = &self.peepholes {
            out.extend([&p.input_gate, &p.forget_gate, &p.output_gate]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(15);
        for g in [
            &mut self.block,
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
        ] {
            out.extend([&mut g.input, &mut g.recurrent, &mut g.bias]);
        }
        if let Some(p) = &mut self.peepholes {
            out.extend([&mut p.input_gate, &mut p.forget_gate, &mut p.output_gate]);
        }
        out
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(15);
        for g in [self.block, self.input_gate, self.forget_gate, self.output_gate] {
            out.extend([g.input, g.recurrent, g.bias]);
        }
        if let Some(p) = self.peepholes {
            out.extend([p.input_gate, p.forget_gate, p.output_gate]);
        }
        out
    }

    /// Names matching [`LstmParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(15);
        for g in GATE_NAMES {
            out.extend([format!("W_{g}"), format!("R_{g}"), format!("b_{g}")]);
        }
        if self.has_peepholes() {
            out.extend(["p_ig".to_string(), "p_fg".into(), "p_og".into()]);
        }
        out
    }

    /// One timestep from state `(o_prev, c_prev)`.
    pub fn step(&self, x: &[f64], o_prev: &[f64], c_prev: &[f64]) -> Result<StepCache> {
        let (n, h) = (self.input_dim(), self.hidden());
        if x.len() != n || o_prev.len() != h || c_prev.len() != h {
            return Err(Error::shape(format!(
                "lstm step expects input {n}, state {h}; got {}, {}, {}",
                x.len(),
                o_prev.len(),
                c_prev.len()
            )));
        }
        let pre_block = self.block.pre_activation(x, o_prev, n, h);
        let mut pre_input = self.input_gate.pre_activation(x, o_prev, n, h);
        let mut pre_forget = self.forget_gate.pre_activation(x, o_prev, n, h);
        let mut pre_output = self.output_gate.pre_activation(x, o_prev, n, h);
        if let Some(p) = &self.peepholes {
            for k in 0..h {
                pre_input[k] += p.input_gate.data()[k] * c_prev[k];
                pre_forget[k] += p.forget_gate.data()[k] * c_prev[k];
            }
        }
        let block: Vec<f64> = pre_block.iter().map(|v| v.tanh()).collect();
        let input_gate: Vec<f64> = pre_input.iter().map(|&v| sigmoid(v)).collect();
        let forget_gate: Vec<f64> = pre_forget.iter().map(|&v| sigmoid(v)).collect();
        let cell: Vec<f64> = (0..h)
            .map(|k| block[k] * input_gate[k] + c_prev[k] * forget_gate[k])
            .collect();
        if let Some(p) = &self.peepholes {
            for k in 0..h {
                pre_output[k] += p.output_gate.data()[k] * cell[k];
            }
        }
        let output_gate: Vec<f64> = pre_output.iter().map(|&v| sigmoid(v)).collect();
        let output: Vec<f64> = (0..h).map(|k| cell[k].tanh() * output_gate[k]).collect();
        Ok(StepCache {
            input: x.to_vec(),
            cell_prev: c_prev.to_vec(),
            output_prev: o_prev.to_vec(),
            pre_block,
            pre_input,
            pre_forget,
            pre_output,
            block,
            input_gate,
            forget_gate,
            output_gate,
            cell,
            output,
        })
    }

    /// Runs the cell over a `T × input_dim` sequence from a zero state.
    pub fn forward(&self, sequence: &Tensor) -> Result<(Tensor, LstmCache)> {
        let (n, h) = (self.input_dim(), self.hidden());
        if sequence.rank() != 2 || sequence.shape()[1] != n {
            return Err(Error::shape(format!(
                "lstm expects T×{n} sequence, got {:?}",
                sequence.shape()
            )));
        }
        let t_len = sequence.shape()[0];
        let mut steps: Vec<StepCache> = Vec::with_capacity(t_len);
        let mut outputs = Vec::with_capacity(t_len * h);
        let zero = vec![0.0; h];
        for x in sequence.data().chunks_exact(n) {
            let step = match steps.last() {
                Some(prev) => self.step(x, &prev.output, &prev.cell)?,
                None => self.step(x, &zero, &zero)?,
            };
            outputs.extend_from_slice(&step.output);
            steps.push(step);
        }
        Ok((Tensor::new(&[t_len, h], outputs)?, LstmCache { steps }))
    }

    /// Backpropagation through time. `upstream[t]` is the loss gradient
    /// arriving at `o_t` from the layer above. Returns parameter gradients
    /// (same layout as `self`) and the `T × input_dim` input gradient.
    pub fn bptt(&self, cache: &LstmCache, upstream: &Tensor) -> Result<(LstmParams, Tensor)> {
        let (n, h) = (self.input_dim(), self.hidden());
        let t_len = cache.len();
        if upstream.shape() != [t_len, h] {
            return Err(Error::shape(format!(
                "bptt upstream {:?} does not match cached sequence {t_len}×{h}",
                upstream.shape()
            )));
        }
        let mut grads = self.zeros_like();
        let mut input_grads = vec![0.0; t_len * n];

        // deltas of gate pre-activations at t+1, plus δc_{t+1}; zero past the end
        let mut next = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        let mut d_cell_next = vec![0.0; h];
        let mut forget_next = vec![0.0; h];

        for t in (0..t_len).rev() {
            let s = &cache.steps[t];

            let mut d_out = upstream.data()[t * h..(t + 1) * h].to_vec();
            for (gate, delta) in self.gates().iter().zip(&next) {
                matvec_t_acc(gate.recurrent.data(), h, delta, &mut d_out);
            }

            let mut d_og = vec![0.0; h];
            let mut d_cell = vec![0.0; h];
            for k in 0..h {
                let tc = s.cell[k].tanh();
                let g = s.output_gate[k];
                d_og[k] = d_out[k] * tc * g * (1.0 - g);
                d_cell[k] = d_out[k] * g * (1.0 - tc * tc) + d_cell_next[k] * forget_next[k];
            }
            if let Some(p) = &self.peepholes {
                for k in 0..h {
                    d_cell[k] += p.output_gate.data()[k] * d_og[k]
                        + p.input_gate.data()[k] * next[1][k]
                        + p.forget_gate.data()[k] * next[2][k];
                }
            }
            let mut d_fg = vec![0.0; h];
            let mut d_ig = vec![0.0; h];
            let mut d_ib = vec![0.0; h];
            for k in 0..h {
                let f = s.forget_gate[k];
                let i = s.input_gate[k];
                let z = s.block[k];
                d_fg[k] = d_cell[k] * s.cell_prev[k] * f * (1.0 - f);
                d_ig[k] = d_cell[k] * z * i * (1.0 - i);
                d_ib[k] = d_cell[k] * i * (1.0 - z * z);
            }
            let deltas = [d_ib, d_ig, d_fg, d_og];

            let dx = &mut input_grads[t * n..(t + 1) * n];
            let grad_gates = [
                &mut grads.block,
                &mut grads.input_gate,
                &mut grads.forget_gate,
                &mut grads.output_gate,
            ];
            for ((gate, grad), delta) in self.gates().iter().zip(grad_gates).zip(&deltas) {
                matvec_t_acc(gate.input.data(), n, delta, dx);
                outer_acc(delta, &s.input, grad.input.data_mut());
                if t > 0 {
                    outer_acc(delta, &s.output_prev, grad.recurrent.data_mut());
                }
                for (b, d) in grad.bias.data_mut().iter_mut().zip(delta) {
                    *b += d;
                }
            }
            if let Some(gp) = &mut grads.peepholes {
                for k in 0..h {
                    gp.input_gate.data_mut()[k] += s.cell_prev[k] * deltas[1][k];
                    gp.forget_gate.data_mut()[k] += s.cell_prev[k] * deltas[2][k];
                    gp.output_gate.data_mut()[k] += s.cell[k] * deltas[3][k];
                }
            }

            next = deltas;
            d_cell_next = d_cell;
            forget_next.copy_from_slice(&s.forget_gate);
        }
        Ok((grads, Tensor::new(&[t_len, n], input_grads)?))
    }
}

/// Everything one timestep needs during BPTT.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub input: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub output_prev: Vec<f64>,
    pub pre_block: Vec<f64>,
    pub pre_input: Vec<f64>,
    pub pre_forget: Vec<f64>,
    pub pre_output: Vec<f64>,
    pub block: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct LstmCache {
    pub steps: Vec<StepCache>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    o_prev: &[f64],
    c_prev: &[f64],
) -> Result<StepCache> {
    params.step(x, o_prev, c_prev)
}

pub fn lstm_forward(params: &LstmParams, sequence: &Tensor) -> Result<(Tensor, LstmCache)> {
    params.forward(sequence)
}

pub fn lstm_bptt(
    params: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
) -> Result<(LstmParams, Tensor)> {
    params.bptt(cache, upstream)
}
