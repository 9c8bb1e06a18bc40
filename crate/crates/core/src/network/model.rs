use serde::{Deserialize, Serialize};

use super::dense::{softmax, DenseLayer};
use crate::conv::{
    reshape_2d_to_3d, reshape_2d_to_seq, reshape_3d_to_2d, reshape_seq_to_2d, Activation,
    Conv2dLayer, Conv3dLayer, ConvCache,
};
use crate::error::{Error, Result};
use crate::recurrent::{BiLstmCache, BiLstmLayer, BiMode, DropoutLayer, DropoutMask};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const PAPER_KERNELS_3D: [[usize; 3]; 3] = [[3, 3, 7], [3, 3, 5], [3, 3, 3]];
pub const PAPER_KERNELS_2D: [[usize; 2]; 2] = [[3, 3], [3, 3]];
/// Kernels used by the small presets, whose inputs are too shallow for the
/// full-size kernels.
pub const SMALL_KERNELS_3D: [[usize; 3]; 3] = [[2, 2, 3], [2, 2, 3], [2, 2, 3]];
pub const SMALL_KERNELS_2D: [[usize; 2]; 2] = [[2, 2], [2, 2]];

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Spatial patch size D (odd).
    pub window: usize,
    /// Spectral depth S after PCA.
    pub bands: usize,
    pub classes: usize,
    pub conv3d_filters: [usize; 3],
    pub conv3d_kernels: [[usize; 3]; 3],
    pub conv2d_filters: [usize; 2],
    pub conv2d_kernels: [[usize; 2]; 2],
    /// Hidden units per direction, both recurrent layers.
    pub hidden: usize,
    pub dropout: f64,
    pub peepholes: bool,
}

impl ArchConfig {
    /// Full-size network: 25×25×30 input, filters 8/16/32 and 64/128, 64 hidden.
    pub fn paper(classes: usize) -> Self {
        ArchConfig {
            window: 25,
            bands: 30,
            classes,
            conv3d_filters: [8, 16, 32],
            conv3d_kernels: PAPER_KERNELS_3D,
            conv2d_filters: [64, 128],
            conv2d_kernels: PAPER_KERNELS_2D,
            hidden: 64,
            dropout: 0.25,
            peepholes: false,
        }
    }

    /// Desk-scale network: filters 4/8/16 and 16/32, 16 hidden, small kernels.
    pub fn reduced(window: usize, bands: usize, classes: usize) -> Self {
        ArchConfig {
            window,
            bands,
            classes,
            conv3d_filters: [4, 8, 16],
            conv3d_kernels: SMALL_KERNELS_3D,
            conv2d_filters: [16, 32],
            conv2d_kernels: SMALL_KERNELS_2D,
            hidden: 16,
            dropout: 0.25,
            peepholes: false,
        }
    }

    /// Tiny network for finite-difference checks: D=9, S=8, N=3, filters
    /// 2/4/8 and 8/16, 8 hidden.
    pub fn gradcheck(peepholes: bool) -> Self {
        ArchConfig {
            window: 9,
            bands: 8,
            classes: 3,
            conv3d_filters: [2, 4, 8],
            conv3d_kernels: SMALL_KERNELS_3D,
            conv2d_filters: [8, 16],
            conv2d_kernels: SMALL_KERNELS_2D,
            hidden: 8,
            dropout: 0.25,
            peepholes,
        }
    }

    /// Same filter and hidden sizes as [`ArchConfig::gradcheck`] but with
    /// the full-size kernels, on the smallest input they fit (13×13×13).
    pub fn gradcheck_full_kernels(peepholes: bool) -> Self {
        ArchConfig {
            window: 13,
            bands: 13,
            conv3d_kernels: PAPER_KERNELS_3D,
            conv2d_kernels: PAPER_KERNELS_2D,
            ..ArchConfig::gradcheck(peepholes)
        }
    }

    /// Output shapes of every layer, with the trainable parameter count of
    /// each. Fails with the name of the first layer that cannot fit.
    pub fn summary(&self) -> Result<Vec<LayerSummary>> {
        let fail = |layer: &str, reason: String| Error::Build {
            layer: layer.to_string(),
            reason,
        };
        if self.window == 0 || self.window % 2 == 0 {
            return Err(fail("input_1", format!("window must be odd, got {}", self.window)));
        }
        if self.bands == 0 {
            return Err(fail("input_1", "spectral depth must be positive".into()));
        }
        if self.classes < 2 {
            return Err(fail("dense_1", format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.hidden == 0 {
            return Err(fail("bidirectional_1", "hidden size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(fail("dropout_1", format!("rate must be in [0, 1), got {}", self.dropout)));
        }

        let mut rows = vec![LayerSummary::new("input_1", vec![self.window, self.window, self.bands, 1], 0)];
        let (mut h, mut w, mut d, mut c) = (self.window, self.window, self.bands, 1);
        for (i, (&f, &k)) in self.conv3d_filters.iter().zip(&self.conv3d_kernels).enumerate() {
            let name = format!("conv3d_{}", i + 1);
            if f == 0 || k.contains(&0) {
                return Err(fail(&name, "filters and kernel sizes must be positive".into()));
            }
            if h < k[0] || w < k[1] || d < k[2] {
                return Err(fail(
                    &name,
                    format!("kernel {}×{}×{} does not fit input {h}×{w}×{d}", k[0], k[1], k[2]),
                ));
            }
            let params = f * (k[0] * k[1] * k[2] * c + 1);
            (h, w, d, c) = (h - k[0] + 1, w - k[1] + 1, d - k[2] + 1, f);
            rows.push(LayerSummary::new(&name, vec![h, w, d, c], params));
        }
        c *= d;
        rows.push(LayerSummary::new("reshape_1", vec![h, w, c], 0));
        for (i, (&f, &k)) in self.conv2d_filters.iter().zip(&self.conv2d_kernels).enumerate() {
            let name = format!("conv2d_{}", i + 1);
            if f == 0 || k.contains(&0) {
                return Err(fail(&name, "filters and kernel sizes must be positive".into()));
            }
            if h < k[0] || w < k[1] {
                return Err(fail(&name, format!("kernel {}×{} does not fit input {h}×{w}", k[0], k[1])));
            }
            let params = f * (k[0] * k[1] * c + 1);
            (h, w, c) = (h - k[0] + 1, w - k[1] + 1, f);
            rows.push(LayerSummary::new(&name, vec![h, w, c], params));
        }
        let (steps, features) = (h, w * c);
        rows.push(LayerSummary::new("reshape_2", vec![steps, features], 0));
        let hd = self.hidden;
        let lstm = |n: usize| 2 * (4 * (hd * n + hd * hd + hd) + if self.peepholes { 3 * hd } else { 0 });
        rows.push(LayerSummary::new("bidirectional_1", vec![steps, 2 * hd], lstm(features)));
        rows.push(LayerSummary::new("dropout_1", vec![steps, 2 * hd], 0));
        rows.push(LayerSummary::new("bidirectional_2", vec![2 * hd], lstm(2 * hd)));
        rows.push(LayerSummary::new("dense_1", vec![self.classes], self.classes * (2 * hd + 1)));
        Ok(rows)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.summary()?.iter().map(|r| r.parameters).sum())
    }
}

/// One row of the layer table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub parameters: usize,
}

impl LayerSummary {
    fn new(name: &str, output_shape: Vec<usize>, parameters: usize) -> Self {
        LayerSummary {
            name: name.to_string(),
            output_shape,
            parameters,
        }
    }
}

/// Formats rows as a Keras-style table with a total line.
pub fn format_summary(rows: &[LayerSummary]) -> String {
    let mut s = format!("{:<18}{:<22}{:>12}\n", "Layer", "Output shape", "Param #");
    for r in rows {
        let shape = r.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ");
        s += &format!("{:<18}{:<22}{:>12}\n", r.name, format!("({shape})"), r.parameters);
    }
    let total: usize = rows.iter().map(|r| r.parameters).sum();
    s += &format!("Total trainable parameters: {total}\n");
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct HssnbModel {
    arch: ArchConfig,
    pub conv3d: [Conv3dLayer; 3],
    pub conv2d: [Conv2dLayer; 2],
    pub bilstm_seq: BiLstmLayer,
    pub dropout: DropoutLayer,
    pub bilstm_last: BiLstmLayer,
    pub dense: DenseLayer,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ModelCache {
    conv3d: Vec<ConvCache>,
    conv2d: Vec<ConvCache>,
    bilstm_seq: BiLstmCache,
    mask: DropoutMask,
    bilstm_last: BiLstmCache,
    dense_input: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
    /// `(layer name, output shape)` in forward order, starting with the input.
    pub shapes: Vec<(String, Vec<usize>)>,
}

/// Glorot-initialized weights and zero biases, drawn in declaration order.
pub fn build_model(arch: &ArchConfig, rng: &mut Rng) -> Result<HssnbModel> {
    let rows = arch.summary()?;
    let mut c = 1;
    let conv3d = std::array::from_fn(|i| {
        let layer = Conv3dLayer::init(arch.conv3d_filters[i], arch.conv3d_kernels[i], c, Activation::Relu, rng);
        c = arch.conv3d_filters[i];
        layer
    });
    let mut c = rows[4].output_shape[2];
    let conv2d = std::array::from_fn(|i| {
        let layer = Conv2dLayer::init(arch.conv2d_filters[i], arch.conv2d_kernels[i], c, Activation::Relu, rng);
        c = arch.conv2d_filters[i];
        layer
    });
    let features = rows[7].output_shape[1];
    let bilstm_seq = BiLstmLayer::init(features, arch.hidden, BiMode::Sequence, arch.peepholes, rng);
    let bilstm_last = BiLstmLayer::init(2 * arch.hidden, arch.hidden, BiMode::Last, arch.peepholes, rng);
    let dense = DenseLayer::init(2 * arch.hidden, arch.classes, rng);
    Ok(HssnbModel {
        arch: arch.clone(),
        conv3d,
        conv2d,
        bilstm_seq,
        dropout: DropoutLayer::new(arch.dropout)?,
        bilstm_last,
        dense,
    })
}

impl HssnbModel {
    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        self.arch.summary().expect("architecture was validated at construction")
    }

    /// Trainable parameters of each layer that has any, in forward order.
    pub fn layer_parameter_counts(&self) -> Vec<(String, usize)> {
        self.summary()
            .into_iter()
            .filter(|r| r.parameters > 0)
            .map(|r| (r.name, r.parameters))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// All parameter tensors in declaration order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.conv3d {
            out.extend([l.kernels(), l.bias()]);
        }
        for l in &self.conv2d {
            out.extend([l.kernels(), l.bias()]);
        }
        for b in [&self.bilstm_seq, &self.bilstm_last] {
            out.extend(b.forward.tensors());
            out.extend(b.backward.tensors());
        }
        out.extend([self.dense.weights(), self.dense.bias()]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.conv3d {
            out.extend(l.params_mut());
        }
        for l in &mut self.conv2d {
            out.extend(l.params_mut());
        }
        for b in [&mut self.bilstm_seq, &mut self.bilstm_last] {
            out.extend(b.forward.tensors_mut());
            out.extend(b.backward.tensors_mut());
        }
        out.extend(self.dense.params_mut());
        out
    }

    /// `layer/tensor` names matching [`HssnbModel::parameters`].
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 1..=3 {
            out.extend([format!("conv3d_{i}/kernels"), format!("conv3d_{i}/bias")]);
        }
        for i in 1..=2 {
            out.extend([format!("conv2d_{i}/kernels"), format!("conv2d_{i}/bias")]);
        }
        for (i, b) in [&self.bilstm_seq, &self.bilstm_last].into_iter().enumerate() {
            for (dir, p) in [("forward", &b.forward), ("backward", &b.backward)] {
                out.extend(p.tensor_names().into_iter().map(|n| format!("bidirectional_{}/{dir}/{n}", i + 1)));
            }
        }
        out.extend(["dense_1/weights".to_string(), "dense_1/bias".to_string()]);
        out
    }

    /// Zero tensors shaped like [`HssnbModel::parameters`].
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.parameters().iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// Class probabilities for one `D × D × S × 1` (or `D × D × S`) patch.
    /// With `training` set, dropout masks are drawn from `rng`; otherwise
    /// `rng` is not touched.
    pub fn forward(&self, patch: &Tensor, training: bool, rng: &mut Rng) -> Result<(Tensor, ModelCache)> {
        let a = &self.arch;
        let expected = [a.window, a.window, a.bands, 1];
        let input = match patch.shape() {
            s if s == expected => patch.clone(),
            s if s == &expected[..3] => patch.clone().reshape(&expected)?,
            s => {
                return Err(Error::shape(format!("model expects a {expected:?} patch, got {s:?}")));
            }
        };
        let mut shapes = vec![("input_1".to_string(), input.shape().to_vec())];

        let mut x = input;
        let mut conv3d = Vec::with_capacity(3);
        for (i, l) in self.conv3d.iter().enumerate() {
            let (y, cache) = l.forward(&x)?;
            shapes.push((format!("conv3d_{}", i + 1), y.shape().to_vec()));
            conv3d.push(cache);
            x = y;
        }
        let mut x = reshape_3d_to_2d(x)?;
        shapes.push(("reshape_1".into(), x.shape().to_vec()));
        let mut conv2d = Vec::with_capacity(2);
        for (i, l) in self.conv2d.iter().enumerate() {
            let (y, cache) = l.forward(&x)?;
            shapes.push((format!("conv2d_{}", i + 1), y.shape().to_vec()));
            conv2d.push(cache);
            x = y;
        }
        let seq = reshape_2d_to_seq(x)?;
        shapes.push(("reshape_2".into(), seq.shape().to_vec()));
        let (seq, bilstm_seq) = self.bilstm_seq.forward(&seq)?;
        shapes.push(("bidirectional_1".into(), seq.shape().to_vec()));
        let (seq, mask) = self.dropout.forward(&seq, training, rng);
        shapes.push(("dropout_1".into(), seq.shape().to_vec()));
        let (features, bilstm_last) = self.bilstm_last.forward(&seq)?;
        shapes.push(("bidirectional_2".into(), features.shape().to_vec()));
        let logits = self.dense.logits(&features)?;
        let probs = softmax(&logits);
        shapes.push(("dense_1".into(), probs.shape().to_vec()));

        Ok((
            probs.clone(),
            ModelCache {
                conv3d,
                conv2d,
                bilstm_seq,
                mask,
                bilstm_last,
                dense_input: features,
                logits,
                probs,
                shapes,
            },
        ))
    }

    /// Inference-mode probabilities.
    pub fn predict_proba(&self, patch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(patch, false, &mut Rng::new(0))?.0)
    }

    /// Gradients of every parameter (ordered as [`HssnbModel::parameters`])
    /// given the loss gradient with respect to the logits.
    pub fn backward(&self, cache: &ModelCache, d_logits: &Tensor) -> Result<Vec<Tensor>> {
        let dense = self.dense.backward(&cache.dense_input, d_logits)?;
        let last = self.bilstm_last.backward(&cache.bilstm_last, &dense.input)?;
        let d_seq = self.dropout.backward(&cache.mask, &last.input)?;
        let seq = self.bilstm_seq.backward(&cache.bilstm_seq, &d_seq)?;

        let c2 = &cache.conv2d[1].pre_activation().shape();
        let mut d = reshape_seq_to_2d(seq.input, c2[1], c2[2])?;
        let mut conv2d_grads = Vec::with_capacity(2);
        for (l, c) in self.conv2d.iter().zip(&cache.conv2d).rev() {
            let g = l.backward(c, &d)?;
            d = g.input;
            conv2d_grads.push((g.kernels, g.bias));
        }
        let c3 = &cache.conv3d[2].pre_activation().shape();
        let mut d = reshape_2d_to_3d(d, c3[2], c3[3])?;
        let mut conv3d_grads = Vec::with_capacity(3);
        for (l, c) in self.conv3d.iter().zip(&cache.conv3d).rev() {
            let g = l.backward(c, &d)?;
            d = g.input;
            conv3d_grads.push((g.kernels, g.bias));
        }

        let mut out = Vec::new();
        for (k, b) in conv3d_grads.into_iter().rev().chain(conv2d_grads.into_iter().rev()) {
            out.extend([k, b]);
        }
        out.extend(seq.forward.into_tensors());
        out.extend(seq.backward.into_tensors());
        out.extend(last.forward.into_tensors());
        out.extend(last.backward.into_tensors());
        out.extend([dense.weights, dense.bias]);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_COUNTS: [usize; 8] = [512, 5776, 13856, 331840, 73856, 1016320, 98816, 2064];

    #[test]
    fn full_size_counts() {
        let model = build_model(&ArchConfig::paper(16), &mut Rng::new(0)).unwrap();
        let counts: Vec<usize> = model.layer_parameter_counts().into_iter().map(|(_, c)| c).collect();
        assert_eq!(counts, TABLE_COUNTS);
        assert_eq!(model.parameter_count(), 1_543_040);
        assert_eq!(ArchConfig::paper(16).parameter_count().unwrap(), 1_543_040);
        assert_eq!(model.parameters().len(), model.parameter_names().len());
    }

    #[test]
    fn nine_classes_only_changes_dense() {
        let rows = ArchConfig::paper(9).summary().unwrap();
        let counts: Vec<usize> = rows.iter().filter(|r| r.parameters > 0).map(|r| r.parameters).collect();
        assert_eq!(&counts[..7], &TABLE_COUNTS[..7]);
        assert_eq!(counts[7], 128 * 9 + 9);
    }

    #[test]
    fn small_window_names_failing_layer() {
        let arch = ArchConfig {
            window: 7,
            ..ArchConfig::paper(16)
        };
        match build_model(&arch, &mut Rng::new(0)) {
            Err(Error::Build { layer, .. }) => assert_eq!(layer, "conv2d_1"),
            other => panic!("expected build error, got {other:?}"),
        }
        let shallow = ArchConfig {
            bands: 12,
            ..ArchConfig::paper(16)
        };
        match shallow.summary() {
            Err(Error::Build { layer, .. }) => assert_eq!(layer, "conv3d_3"),
            other => panic!("expected build error, got {other:?}"),
        }
        let even = ArchConfig {
            window: 24,
            ..ArchConfig::paper(16)
        };
        assert!(even.summary().is_err());
        // the small presets are infeasible with the full-size kernels
        let k = ArchConfig {
            conv3d_kernels: PAPER_KERNELS_3D,
            conv2d_kernels: PAPER_KERNELS_2D,
            ..ArchConfig::gradcheck(false)
        };
        assert!(k.summary().is_err());
    }

    #[test]
    fn presets_are_feasible() {
        for arch in [
            ArchConfig::gradcheck(false),
            ArchConfig::gradcheck(true),
            ArchConfig::gradcheck_full_kernels(true),
            ArchConfig::reduced(11, 8, 3),
            ArchConfig::reduced(19, 8, 3),
        ] {
            let model = build_model(&arch, &mut Rng::new(1)).unwrap();
            assert_eq!(model.parameter_count(), arch.parameter_count().unwrap());
        }
        let rows = ArchConfig::gradcheck(false).summary().unwrap();
        assert_eq!(rows[7].output_shape, vec![4, 64]);
    }

    #[test]
    fn forward_shapes_follow_summary() {
        let arch = ArchConfig::reduced(11, 8, 3);
        let model = build_model(&arch, &mut Rng::new(3)).unwrap();
        let mut rng = Rng::new(4);
        let patch = Tensor::from_fn(&[11, 11, 8, 1], |_| rng.normal(0.0, 1.0));
        let (p, cache) = model.forward(&patch, true, &mut rng).unwrap();
        let expected: Vec<(String, Vec<usize>)> =
            arch.summary().unwrap().into_iter().map(|r| (r.name, r.output_shape)).collect();
        assert_eq!(cache.shapes, expected);
        assert!((p.sum() - 1.0).abs() < 1e-9);
        // rank-3 patch is accepted as well
        let flat = patch.clone().reshape(&[11, 11, 8]).unwrap();
        assert_eq!(model.predict_proba(&flat).unwrap(), model.predict_proba(&patch).unwrap());
        assert!(model.forward(&Tensor::zeros(&[9, 9, 8, 1]), false, &mut rng).is_err());
    }

    #[test]
    fn zero_dense_gives_uniform() {
        let mut model = build_model(&ArchConfig::reduced(11, 8, 4), &mut Rng::new(5)).unwrap();
        for t in model.dense.params_mut() {
            t.fill(0.0);
        }
        let p = model.predict_proba(&Tensor::ones(&[11, 11, 8, 1])).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn inference_ignores_rng_and_training_uses_it() {
        let model = build_model(&ArchConfig::reduced(11, 8, 3), &mut Rng::new(6)).unwrap();
        let patch = Tensor::from_fn(&[11, 11, 8, 1], |i| (i as f64 * 0.01).sin());
        let a = model.forward(&patch, false, &mut Rng::new(1)).unwrap().0;
        let b = model.forward(&patch, false, &mut Rng::new(2)).unwrap().0;
        assert_eq!(a, b);
        let c = model.forward(&patch, true, &mut Rng::new(1)).unwrap().0;
        let d = model.forward(&patch, true, &mut Rng::new(1)).unwrap().0;
        assert_eq!(c, d);
    }

    #[test]
    fn backward_shapes_match_parameters() {
        let model = build_model(&ArchConfig::gradcheck(true), &mut Rng::new(7)).unwrap();
        let patch = Tensor::from_fn(&[9, 9, 8, 1], |i| (i as f64 * 0.3).cos());
        let (p, cache) = model.forward(&patch, true, &mut Rng::new(8)).unwrap();
        let grads = model.backward(&cache, &p).unwrap();
        let params = model.parameters();
        assert_eq!(grads.len(), params.len());
        for (g, p) in grads.iter().zip(params) {
            assert_eq!(g.shape(), p.shape());
        }
    }
}
