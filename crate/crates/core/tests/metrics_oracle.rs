use hssnb_core::{ConfusionMatrix, Rng};

/// Scores recomputed straight from (truth, prediction) pairs.
fn brute_force(classes: usize, samples: &[(usize, usize)]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let correct = samples.iter().filter(|(t, p)| t == p).count() as f64;
    let mut recall_sum = 0.0;
    let mut chance = 0.0;
    for k in 1..=classes {
        let truths = samples.iter().filter(|(t, _)| *t == k).count() as f64;
        let preds = samples.iter().filter(|(_, p)| *p == k).count() as f64;
        let hits = samples.iter().filter(|(t, p)| *t == k && *p == k).count() as f64;
        recall_sum += hits / truths;
        chance += truths * preds;
    }
    let p_o = correct / n;
    let p_e = chance / (n * n);
    (p_o, recall_sum / classes as f64, (p_o - p_e) / (1.0 - p_e))
}

#[test]
fn random_matrices_match_sample_oracle() {
    let mut rng = Rng::new(2024);
    let mut checked = 0;
    while checked < 1000 {
        let classes = 2 + rng.below(15) as usize;
        let n = classes + rng.below(400) as usize;
        // every class appears as a truth at least once; accuracy varies per matrix
        let skill = rng.uniform();
        let samples: Vec<(usize, usize)> = (0..n)
            .map(|i| {
                let t = if i < classes { i + 1 } else { 1 + rng.below(classes as u64) as usize };
                let p = if rng.uniform() < skill { t } else { 1 + rng.below(classes as u64) as usize };
                (t, p)
            })
            .collect();
        let (oa, aa, kappa) = brute_force(classes, &samples);
        if !kappa.is_finite() {
            continue;
        }
        let mut cm = ConfusionMatrix::new(classes);
        for &(t, p) in &samples {
            cm.accumulate(t as u16, p as u16).unwrap();
        }
        let scores = cm.scores().unwrap();
        assert!((scores.overall_accuracy - oa).abs() < 1e-12);
        assert!((scores.average_accuracy - aa).abs() < 1e-12);
        assert!((scores.kappa - kappa).abs() < 1e-12, "{} vs {kappa}", scores.kappa);
        checked += 1;
    }
}

#[test]
fn ten_thousand_samples_tally() {
    let classes = 7;
    let mut rng = Rng::new(5);
    let mut cm = ConfusionMatrix::new(classes);
    let mut truth_tally = vec![0u64; classes];
    let mut pred_tally = vec![0u64; classes];
    for _ in 0..10_000 {
        let t = 1 + rng.below(classes as u64) as usize;
        let p = 1 + rng.below(classes as u64) as usize;
        truth_tally[t - 1] += 1;
        pred_tally[p - 1] += 1;
        cm.accumulate(t as u16, p as u16).unwrap();
    }
    assert_eq!(cm.total(), 10_000);
    assert_eq!(cm.row_sums(), truth_tally);
    assert_eq!(cm.col_sums(), pred_tally);
}

#[test]
fn merged_halves_equal_whole() {
    let mut rng = Rng::new(6);
    let (mut a, mut b, mut whole) = (ConfusionMatrix::new(4), ConfusionMatrix::new(4), ConfusionMatrix::new(4));
    for i in 0..500 {
        let t = 1 + rng.below(4) as u16;
        let p = 1 + rng.below(4) as u16;
        whole.accumulate(t, p).unwrap();
        if i % 2 == 0 { a.accumulate(t, p).unwrap() } else { b.accumulate(t, p).unwrap() }
    }
    a.merge(&b).unwrap();
    assert_eq!(a, whole);
}
