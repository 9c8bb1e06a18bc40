use std::collections::BTreeMap;

use log::warn;

use super::{HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `D × D × S` neighbourhoods around labeled pixels, labeled by their
/// centre pixel. Patches are stored back to back, ordered as extracted.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    window: usize,
    bands: usize,
    classes: usize,
    data: Vec<f64>,
    labels: Vec<u16>,
    coords: Vec<(usize, usize)>,
}

impl PatchSet {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.window * self.window * self.bands
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let n = self.patch_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Patch `i` shaped `D × D × S × 1`, ready for the network input.
    pub fn patch_tensor(&self, i: usize) -> Tensor {
        Tensor::new(&[self.window, self.window, self.bands, 1], self.patch(i).to_vec())
            .expect("patch length matches its shape")
    }

    /// 1-based class of patch `i`.
    pub fn label(&self, i: usize) -> u16 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn one_hot(&self, i: usize) -> Tensor {
        let mut t = Tensor::zeros(&[self.classes]);
        t.data_mut()[self.labels[i] as usize - 1] = 1.0;
        t
    }

    /// All labels as an `M × N` one-hot matrix; `None` for an empty set.
    pub fn one_hot_matrix(&self) -> Option<Tensor> {
        if self.is_empty() {
            return None;
        }
        let n = self.classes;
        let mut t = Tensor::zeros(&[self.len(), n]);
        for (i, &l) in self.labels.iter().enumerate() {
            t.data_mut()[i * n + l as usize - 1] = 1.0;
        }
        Some(t)
    }

    /// New set holding the given patches in the given order.
    pub fn subset(&self, indices: &[usize]) -> PatchSet {
        let mut data = Vec::with_capacity(indices.len() * self.patch_len());
        for &i in indices {
            data.extend_from_slice(self.patch(i));
        }
        PatchSet {
            window: self.window,
            bands: self.bands,
            classes: self.classes,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes];
        for &l in &self.labels {
            sizes[l as usize - 1] += 1;
        }
        sizes
    }
}

/// One patch per labeled pixel, in (row, col) order. The cube is
/// zero-padded by `(window − 1) / 2` on every spatial edge so border
/// pixels are usable.
pub fn extract_patches(cube: &HsiCube, labels: &LabelMap, window: usize) -> Result<PatchSet> {
    labels.matches(cube)?;
    if window == 0 || window % 2 == 0 {
        return Err(Error::param(format!("window must be odd, got {window}")));
    }
    let coords: Vec<(usize, usize)> = (0..cube.height())
        .flat_map(|r| (0..cube.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| labels.get(r, c) != 0)
        .collect();
    if coords.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let half = (window - 1) / 2;
    let bands = cube.bands();
    let (h, w) = (cube.height() as isize, cube.width() as isize);
    let mut data = vec![0.0; coords.len() * window * window * bands];
    let patch_len = window * window * bands;
    for (patch, &(r, c)) in data.chunks_exact_mut(patch_len).zip(&coords) {
        for i in 0..window {
            let src_r = r as isize + i as isize - half as isize;
            if src_r < 0 || src_r >= h {
                continue;
            }
            for j in 0..window {
                let src_c = c as isize + j as isize - half as isize;
                if src_c < 0 || src_c >= w {
                    continue;
                }
                let dst = (i * window + j) * bands;
                patch[dst..dst + bands].copy_from_slice(cube.pixel(src_r as usize, src_c as usize));
            }
        }
    }
    let label_values = coords.iter().map(|&(r, c)| labels.get(r, c)).collect();
    Ok(PatchSet {
        window,
        bands,
        classes: labels.classes(),
        data,
        labels: label_values,
        coords,
    })
}

/// Per-class split: `round(train_fraction · class_size)` patches (at least
/// one) go to training, the rest to testing. Both halves keep the input
/// order.
pub fn stratified_split(
    set: &PatchSet,
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<(PatchSet, PatchSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, &l) in set.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            warn!("class {class} has a single sample; it goes to the training split");
        }
        rng.shuffle(&mut members);
        let n_train = ((train_fraction * members.len() as f64).round() as usize)
            .clamp(1, members.len());
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((set.subset(&train_idx), set.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn ramp_cube(w: usize, h: usize, bands: usize) -> HsiCube {
        HsiCube::new(w, h, bands, (0..w * h * bands).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn unit_window_is_pixel_spectrum() {
        let cube = ramp_cube(5, 4, 3);
        let labels = LabelMap::new(5, 4, 2, (0..20).map(|i| (i % 3) as u16).collect()).unwrap();
        let set = extract_patches(&cube, &labels, 1).unwrap();
        assert_eq!(set.len(), labels.labeled_count());
        for (i, &(r, c)) in set.coords().iter().enumerate() {
            assert_eq!(set.patch(i), cube.pixel(r, c));
            assert_eq!(set.label(i), labels.get(r, c));
        }
    }

    #[test]
    fn corner_patch_matches_direct_neighbourhood_oracle() {
        let (w, h, b, d) = (6, 5, 2, 3);
        let cube = ramp_cube(w, h, b);
        let mut raw = vec![0u16; w * h];
        raw[0] = 1;
        raw[w * h - 1] = 2;
        raw[w + 2] = 1;
        let labels = LabelMap::new(w, h, 2, raw).unwrap();
        let set = extract_patches(&cube, &labels, d).unwrap();
        assert_eq!(set.coords(), &[(0, 0), (1, 2), (4, 5)]);
        for (p, &(r, c)) in set.coords().iter().enumerate() {
            let patch = set.patch(p);
            for i in 0..d {
                for j in 0..d {
                    for band in 0..b {
                        let rr = r as i64 + i as i64 - 1;
                        let cc = c as i64 + j as i64 - 1;
                        let expect = if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                            0.0
                        } else {
                            cube.values().get(&[rr as usize, cc as usize, band])
                        };
                        assert_eq!(patch[(i * d + j) * b + band], expect);
                    }
                }
            }
        }
        // the (0,0) corner has 5 padded cells
        let zeros = set.patch(0).chunks(b).filter(|px| px.iter().all(|&v| v == 0.0)).count();
        assert_eq!(zeros, 5);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let cube = ramp_cube(4, 4, 2);
        let labels = LabelMap::new(4, 4, 3, (0..16).map(|i| (i % 4) as u16).collect()).unwrap();
        let set = extract_patches(&cube, &labels, 3).unwrap();
        let oh = set.one_hot_matrix().unwrap();
        for row in oh.data().chunks(3) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn errors() {
        let cube = ramp_cube(4, 4, 2);
        let labels = LabelMap::new(4, 4, 3, vec![0; 16]).unwrap();
        assert!(matches!(extract_patches(&cube, &labels, 3), Err(Error::EmptyDataset)));
        let labels = LabelMap::new(4, 4, 3, vec![1; 16]).unwrap();
        assert!(extract_patches(&cube, &labels, 4).is_err());
        let set = extract_patches(&cube, &labels, 3).unwrap();
        assert!(stratified_split(&set, 0.0, &mut Rng::new(0)).is_err());
        assert!(stratified_split(&set, 1.0, &mut Rng::new(0)).is_err());
    }

    fn balanced_set(per_class: usize, classes: usize) -> PatchSet {
        let w = per_class;
        let h = classes;
        let cube = ramp_cube(w, h, 1);
        let labels = LabelMap::new(w, h, classes, (0..w * h).map(|i| (i / w + 1) as u16).collect()).unwrap();
        extract_patches(&cube, &labels, 1).unwrap()
    }

    #[test]
    fn split_ratios() {
        let set = balanced_set(100, 4);
        let (train, test) = stratified_split(&set, 0.3, &mut Rng::new(1)).unwrap();
        assert_eq!(train.class_sizes(), vec![30; 4]);
        assert_eq!(test.class_sizes(), vec![70; 4]);
        let (train, test) = stratified_split(&set, 0.1, &mut Rng::new(1)).unwrap();
        assert_eq!(train.class_sizes(), vec![10; 4]);
        assert_eq!(test.class_sizes(), vec![90; 4]);
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let cube = ramp_cube(5, 1, 1);
        let labels = LabelMap::new(5, 1, 2, vec![1, 1, 1, 1, 2]).unwrap();
        let set = extract_patches(&cube, &labels, 1).unwrap();
        let (train, test) = stratified_split(&set, 0.1, &mut Rng::new(3)).unwrap();
        assert_eq!(train.class_sizes(), vec![1, 1]);
        assert_eq!(test.class_sizes(), vec![3, 0]);
    }

    proptest! {
        #[test]
        fn patch_count_equals_labeled_pixels(raw in prop::collection::vec(0u16..4, 30), d in 0usize..3) {
            let cube = ramp_cube(6, 5, 2);
            let labels = LabelMap::new(6, 5, 3, raw.clone()).unwrap();
            let labeled = raw.iter().filter(|&&l| l != 0).count();
            match extract_patches(&cube, &labels, 2 * d + 1) {
                Ok(set) => prop_assert_eq!(set.len(), labeled),
                Err(Error::EmptyDataset) => prop_assert_eq!(labeled, 0),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn split_is_deterministic_partition(raw in prop::collection::vec(1u16..4, 40), frac in 0.05f64..0.95, seed in any::<u64>()) {
            let cube = ramp_cube(8, 5, 1);
            let labels = LabelMap::new(8, 5, 3, raw).unwrap();
            let set = extract_patches(&cube, &labels, 1).unwrap();
            let (tr, te) = stratified_split(&set, frac, &mut Rng::new(seed)).unwrap();
            let (tr2, te2) = stratified_split(&set, frac, &mut Rng::new(seed)).unwrap();
            prop_assert_eq!(&tr, &tr2);
            prop_assert_eq!(&te, &te2);
            let mut all: Vec<_> = tr.coords().iter().chain(te.coords()).copied().collect();
            all.sort_unstable();
            let mut expect = set.coords().to_vec();
            expect.sort_unstable();
            prop_assert_eq!(all.len(), expect.len());
            prop_assert_eq!(all, expect);
        }
    }
}
