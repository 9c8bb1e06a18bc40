//! Confusion matrix and the three scene-level scores: overall accuracy,
//! average (per-class) accuracy, and Cohen's kappa.
//!
//! Rows are ground truth, columns are predictions. Labels are 1-based to
//! match the ground-truth maps (0 is never scored).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        assert!(classes >= 1, "confusion matrix needs at least one class");
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if classes == 0 || counts.len() != classes * classes {
            return Err(Error::param(format!(
                "{} counts do not form a {classes}×{classes} matrix",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Count for 1-based `(truth, predicted)`.
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[(truth - 1) * self.classes + predicted - 1]
    }

    pub fn accumulate(&mut self, truth: u16, predicted: u16) -> Result<()> {
        let n = self.classes;
        for (what, l) in [("true", truth), ("predicted", predicted)] {
            if l == 0 || l as usize > n {
                return Err(Error::param(format!("{what} label {l} outside 1..={n}")));
            }
        }
        self.counts[(truth as usize - 1) * n + predicted as usize - 1] += 1;
        Ok(())
    }

    /// Elementwise sum, for combining per-worker matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::param("cannot merge matrices of different class counts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.counts[k * self.classes + k]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.classes).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let n = self.classes;
        (0..n).map(|j| (0..n).map(|i| self.counts[i * n + j]).sum()).collect()
    }

    fn require_samples(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::Metric("confusion matrix is empty".into())),
            t => Ok(t),
        }
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        let total = self.require_samples()?;
        Ok(self.trace() as f64 / total as f64)
    }

    /// Per-class recall for 1-based classes; `None` for classes absent from
    /// the ground truth.
    pub fn class_accuracies(&self) -> Vec<Option<f64>> {
        let n = self.classes;
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(k, &r)| (r > 0).then(|| self.counts[k * n + k] as f64 / r as f64))
            .collect()
    }

    /// Mean per-class recall. Every class must have at least one sample.
    pub fn average_accuracy(&self) -> Result<f64> {
        self.require_samples()?;
        let recalls = self.class_accuracies();
        if let Some(k) = recalls.iter().position(Option::is_none) {
            return Err(Error::Metric(format!("class {} has no samples", k + 1)));
        }
        Ok(recalls.iter().flatten().sum::<f64>() / self.classes as f64)
    }

    pub fn kappa(&self) -> Result<f64> {
        let total = self.require_samples()?;
        let rows = self.row_sums();
        let cols = self.col_sums();
        let chance: u128 = rows.iter().zip(&cols).map(|(&r, &c)| r as u128 * c as u128).sum();
        let t2 = total as u128 * total as u128;
        if chance == t2 {
            // all mass on one truth class and one predicted class
            return if self.trace() == total {
                Ok(1.0)
            } else {
                Err(Error::Metric("kappa undefined: chance agreement is 1".into()))
            };
        }
        // (p_o − p_e) / (1 − p_e) scaled by total², exact until the final division
        let num = total as i128 * self.trace() as i128 - chance as i128;
        Ok(num as f64 / (t2 - chance) as f64)
    }

    pub fn scores(&self) -> Result<RunScores> {
        Ok(RunScores {
            kappa: self.kappa()?,
            average_accuracy: self.average_accuracy()?,
            overall_accuracy: self.overall_accuracy()?,
        })
    }
}

/// Scores of one evaluation run, as fractions in `[0, 1]` (kappa in `[−1, 1]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub kappa: f64,
    pub average_accuracy: f64,
    pub overall_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        // shifting by the first value keeps identical runs at exactly zero spread
        let shift = values[0];
        let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
        let mean = shift + offset;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, std }
    }

    fn percent(&self) -> String {
        format!("{:.2} ± {:.1}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Mean ± sample standard deviation of each score over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kappa: Summary,
    #[serde(rename = "aa")]
    pub average_accuracy: Summary,
    #[serde(rename = "oa")]
    pub overall_accuracy: Summary,
    pub runs: usize,
}

impl Report {
    pub fn from_runs(runs: &[RunScores]) -> Result<Report> {
        if runs.is_empty() {
            return Err(Error::param("report needs at least one run"));
        }
        let pick = |f: fn(&RunScores) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(Report {
            kappa: pick(|r| r.kappa),
            average_accuracy: pick(|r| r.average_accuracy),
            overall_accuracy: pick(|r| r.overall_accuracy),
            runs: runs.len(),
        })
    }

    /// `"kappa | aa | oa"` in percent, e.g. `99.80 ± 0.1 | 99.89 ± 0.0 | 99.83 ± 0.1`.
    pub fn row(&self) -> String {
        format!(
            "{} | {} | {}",
            self.kappa.percent(),
            self.average_accuracy.percent(),
            self.overall_accuracy.percent()
        )
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>16}", "metric", format!("({} run{})", self.runs, if self.runs == 1 { "" } else { "s" }));
        for (name, v) in [
            ("Kappa", &self.kappa),
            ("AA", &self.average_accuracy),
            ("OA", &self.overall_accuracy),
        ] {
            let _ = writeln!(s, "{:<8} {:>16}", name, v.percent());
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn report(runs: &[RunScores]) -> Result<Report> {
    Report::from_runs(runs)
}
