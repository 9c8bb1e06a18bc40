//! Central-difference checks of the hand-written BPTT against the forward
//! pass, for every parameter tensor and the inputs.

use hssnb_core::recurrent::{BiLstmLayer, BiMode, LstmParams};
use hssnb_core::{Rng, Tensor};

const EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn random_lstm(n: usize, h: usize, peep: bool, seed: u64) -> LstmParams {
    let mut rng = Rng::new(seed);
    let mut p = LstmParams::init(n, h, peep, &mut rng);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.uniform_range(-0.7, 0.7);
        }
    }
    p
}

fn random_seq(t: usize, n: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(&[t, n], |_| rng.uniform_range(-1.0, 1.0))
}

/// Max relative error over all LSTM parameters and inputs, loss = sum of outputs.
fn lstm_max_error(t: usize, h: usize, n: usize, peep: bool, seed: u64) -> f64 {
    let p = random_lstm(n, h, peep, seed);
    let seq = random_seq(t, n, seed + 1);
    let loss = |p: &LstmParams, x: &Tensor| p.forward(x).unwrap().0.sum();
    let (_, cache) = p.forward(&seq).unwrap();
    let (grads, dx) = p.bptt(&cache, &Tensor::ones(&[t, h])).unwrap();

    let mut worst: f64 = 0.0;
    let n_tensors = p.tensors().len();
    for ti in 0..n_tensors {
        for i in 0..p.tensors()[ti].len() {
            let mut plus = p.clone();
            plus.tensors_mut()[ti].data_mut()[i] += EPS;
            let mut minus = p.clone();
            minus.tensors_mut()[ti].data_mut()[i] -= EPS;
            let numeric = (loss(&plus, &seq) - loss(&minus, &seq)) / (2.0 * EPS);
            let e = rel_err(grads.tensors()[ti].data()[i], numeric);
            assert!(e < 1e-6, "{}[{i}]: analytic {} numeric {numeric}", p.tensor_names()[ti], grads.tensors()[ti].data()[i]);
            worst = worst.max(e);
        }
    }
    for i in 0..seq.len() {
        let mut plus = seq.clone();
        plus.data_mut()[i] += EPS;
        let mut minus = seq.clone();
        minus.data_mut()[i] -= EPS;
        let numeric = (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * EPS);
        let e = rel_err(dx.data()[i], numeric);
        assert!(e < 1e-6, "input[{i}]");
        worst = worst.max(e);
    }
    worst
}

#[test]
fn lstm_bptt_matches_finite_differences_without_peepholes() {
    let e = lstm_max_error(4, 5, 3, false, 100);
    println!("max relative error (peepholes off): {e:.3e}");
}

#[test]
fn lstm_bptt_matches_finite_differences_with_peepholes() {
    let e = lstm_max_error(4, 5, 3, true, 200);
    println!("max relative error (peepholes on): {e:.3e}");
}

#[test]
fn lstm_bptt_longer_sequences() {
    for (t, h) in [(8, 8), (1, 3), (2, 6)] {
        for peep in [false, true] {
            lstm_max_error(t, h, 4, peep, 300 + t as u64);
        }
    }
}

fn bilstm_check(mode: BiMode, peep: bool, seed: u64) {
    let mut rng = Rng::new(seed);
    let mut layer = BiLstmLayer::init(3, 4, mode, peep, &mut rng);
    for t in layer.forward.tensors_mut().into_iter().chain(layer.backward.tensors_mut()) {
        for v in t.data_mut() {
            *v = rng.uniform_range(-0.7, 0.7);
        }
    }
    let seq = random_seq(5, 3, seed + 1);
    let (out, cache) = layer.forward(&seq).unwrap();
    let weights = Tensor::from_fn(out.shape(), |_| rng.uniform_range(-1.0, 1.0));
    let loss = |l: &BiLstmLayer, x: &Tensor| {
        let y = l.forward(x).unwrap().0;
        y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let g = layer.backward(&cache, &weights).unwrap();

    for dir in 0..2 {
        let count = layer.forward.tensors().len();
        for ti in 0..count {
            let analytic = if dir == 0 { g.forward.tensors()[ti].clone() } else { g.backward.tensors()[ti].clone() };
            for i in 0..analytic.len() {
                let bump = |delta: f64| {
                    let mut l = layer.clone();
                    let params = if dir == 0 { &mut l.forward } else { &mut l.backward };
                    params.tensors_mut()[ti].data_mut()[i] += delta;
                    loss(&l, &seq)
                };
                let numeric = (bump(EPS) - bump(-EPS)) / (2.0 * EPS);
                assert!(rel_err(analytic.data()[i], numeric) < 1e-6, "dir {dir} tensor {ti}[{i}]");
            }
        }
    }
    for i in 0..seq.len() {
        let mut plus = seq.clone();
        plus.data_mut()[i] += EPS;
        let mut minus = seq.clone();
        minus.data_mut()[i] -= EPS;
        let numeric = (loss(&layer, &plus) - loss(&layer, &minus)) / (2.0 * EPS);
        assert!(rel_err(g.input.data()[i], numeric) < 1e-6, "input[{i}]");
    }
}

#[test]
fn bilstm_sequence_mode_gradients() {
    bilstm_check(BiMode::Sequence, false, 7);
    bilstm_check(BiMode::Sequence, true, 8);
}

#[test]
fn bilstm_last_mode_gradients() {
    bilstm_check(BiMode::Last, false, 9);
    bilstm_check(BiMode::Last, true, 10);
}
