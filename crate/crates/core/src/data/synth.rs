//! Desk-scale stand-in for real scenes: blocky class regions, one smooth
//! spectral signature per class, additive Gaussian noise.

use std::f64::consts::PI;

use super::{HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Noise-free spectrum of 1-based class `class`. Signatures are offset
/// cosine (DCT-II) basis vectors, so distinct classes are well separated.
pub fn class_signature(class: usize, bands: usize) -> Vec<f64> {
    let k = (class - 1) as f64;
    (0..bands)
        .map(|b| 0.5 + 0.3 * (PI * k * (b as f64 + 0.5) / bands as f64).cos())
        .collect()
}

fn tile_count(width: usize, height: usize, tile: usize) -> usize {
    width.div_ceil(tile) * height.div_ceil(tile)
}

pub fn synth_generate(
    width: usize,
    height: usize,
    bands: usize,
    classes: usize,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<(HsiCube, LabelMap)> {
    if classes < 2 {
        return Err(Error::param(format!("need at least 2 classes, got {classes}")));
    }
    if bands < classes {
        return Err(Error::param(format!(
            "bands ({bands}) must be at least the class count ({classes})"
        )));
    }
    if classes > u16::MAX as usize {
        return Err(Error::param("class count exceeds u16 range"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::param(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if width * height < classes {
        return Err(Error::param(format!(
            "{width}x{height} image cannot hold {classes} classes"
        )));
    }

    let mut tile = (width.min(height) / 4).max(1);
    while tile > 1 && tile_count(width, height, tile) < classes {
        tile -= 1;
    }
    let tiles_x = width.div_ceil(tile);
    let n_tiles = tile_count(width, height, tile);

    // Every class gets at least one tile; the rest are drawn uniformly.
    let mut tile_labels: Vec<u16> = (1..=classes as u16).collect();
    while tile_labels.len() < n_tiles {
        tile_labels.push(1 + rng.below(classes as u64) as u16);
    }
    rng.shuffle(&mut tile_labels);

    let signatures: Vec<Vec<f64>> = (1..=classes).map(|c| class_signature(c, bands)).collect();
    let mut labels = Vec::with_capacity(width * height);
    let mut values = Vec::with_capacity(width * height * bands);
    for row in 0..height {
        for col in 0..width {
            let label = tile_labels[(row / tile) * tiles_x + col / tile];
            labels.push(label);
            for &s in &signatures[label as usize - 1] {
                let noise = if noise_sigma > 0.0 {
                    rng.normal(0.0, noise_sigma)
                } else {
                    0.0
                };
                values.push(s + noise);
            }
        }
    }
    Ok((
        HsiCube::new(width, height, bands, values)?,
        LabelMap::new(width, height, classes, labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_pixels_share_class_spectrum() {
        let (cube, labels) = synth_generate(12, 10, 6, 3, 0.0, &mut Rng::new(1)).unwrap();
        for r in 0..10 {
            for c in 0..12 {
                let l = labels.get(r, c) as usize;
                assert_eq!(cube.pixel(r, c), class_signature(l, 6).as_slice());
            }
        }
    }

    #[test]
    fn deterministic_and_all_classes_present() {
        let a = synth_generate(20, 20, 9, 5, 0.1, &mut Rng::new(8)).unwrap();
        let b = synth_generate(20, 20, 9, 5, 0.1, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.1.class_counts()[1..].iter().all(|&n| n > 0));
        assert_eq!(a.1.labeled_count(), 400);
    }

    #[test]
    fn nearest_centroid_oracle_separates_classes() {
        let (cube, labels) = synth_generate(32, 32, 16, 3, 0.05, &mut Rng::new(7)).unwrap();
        // centroids estimated from the data, not from the signatures
        let mut sums = vec![vec![0.0; 16]; 3];
        let mut counts = [0usize; 3];
        for (px, &l) in cube.pixels().zip(labels.labels()) {
            let k = l as usize - 1;
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(px) {
                *s += v;
            }
        }
        let centroids: Vec<Vec<f64>> = sums
            .iter()
            .zip(counts)
            .map(|(s, n)| s.iter().map(|v| v / n as f64).collect())
            .collect();
        let correct = cube
            .pixels()
            .zip(labels.labels())
            .filter(|(px, &l)| {
                let dist = |c: &Vec<f64>| c.iter().zip(px.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let best = (0..3)
                    .min_by(|&i, &j| dist(&centroids[i]).total_cmp(&dist(&centroids[j])))
                    .unwrap();
                best + 1 == l as usize
            })
            .count();
        assert!(correct as f64 / 1024.0 >= 0.99, "accuracy {}", correct as f64 / 1024.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_generate(8, 8, 8, 1, 0.0, &mut Rng::new(0)).is_err());
        assert!(synth_generate(8, 8, 2, 3, 0.0, &mut Rng::new(0)).is_err());
        assert!(synth_generate(8, 8, 4, 3, -1.0, &mut Rng::new(0)).is_err());
    }
}
