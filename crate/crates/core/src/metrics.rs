//! Confusion-matrix scores: overall accuracy, average accuracy, Cohen's kappa.

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("confusion matrix needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("confusion matrix is empty")]
    Empty,
    #[error("class {class} outside 1..={k}")]
    ClassRange { class: usize, k: usize },
    #[error("cannot merge {0}-class and {1}-class matrices")]
    Mismatch(usize, usize),
}

/// `K×K` counts indexed `[truth][prediction]`, classes 1-based at the API.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Result<Self, MetricsError> {
        if k < 2 {
            return Err(MetricsError::TooFewClasses(k));
        }
        Ok(ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        })
    }

    /// Builds a matrix from rows of counts, `rows[truth][pred]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let mut cm = ConfusionMatrix::new(rows.len())?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != cm.k {
                return Err(MetricsError::Mismatch(cm.k, row.len()));
            }
            cm.counts[t * cm.k..(t + 1) * cm.k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, truth: u16, pred: u16) -> Result<(), MetricsError> {
        for c in [truth as usize, pred as usize] {
            if c == 0 || c > self.k {
                return Err(MetricsError::ClassRange { class: c, k: self.k });
            }
        }
        self.counts[(truth as usize - 1) * self.k + pred as usize - 1] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.k != self.k {
            return Err(MetricsError::Mismatch(self.k, other.k));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Count at 1-based `(truth, pred)`.
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[(truth - 1) * self.k + pred - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i * self.k + i]).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[(truth - 1) * self.k..truth * self.k].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.counts[t * self.k + pred - 1]).sum()
    }

    /// Recall per class; `None` for classes with no truth samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (1..=self.k)
            .map(|c| {
                let n = self.row_sum(c);
                (n > 0).then(|| self.get(c, c) as f64 / n as f64)
            })
            .collect()
    }

    pub fn overall_accuracy(&self) -> Result<f64, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Mean recall over the classes that have truth samples.
    pub fn average_accuracy(&self) -> Result<f64, MetricsError> {
        let recalls: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        if recalls.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Cohen's kappa `(p_o − p_e) / (1 − p_e)`.
    ///
    /// Evaluated as `(N·trace − Σ r_c·c_c) / (N² − Σ r_c·c_c)` in integers
    /// with a single final division, so the independent-margins case is
    /// exactly 0 and a diagonal matrix exactly 1. When `p_e == 1` (all mass
    /// in one cell) the result is 1 if `p_o == 1` and 0 otherwise.
    pub fn kappa(&self) -> Result<f64, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        let n = total as i128;
        let chance: i128 = (1..=self.k)
            .map(|c| self.row_sum(c) as i128 * self.col_sum(c) as i128)
            .sum();
        let denom = n * n - chance;
        if denom == 0 {
            return Ok(if self.trace() == total { 1.0 } else { 0.0 });
        }
        Ok((n * self.trace() as i128 - chance) as f64 / denom as f64)
    }

    /// Per-class accuracy table with an OA / AA / Kappa footer. Accuracies are
    /// percentages with two decimals, kappa has four decimals.
    pub fn render_table(&self, class_names: Option<&[String]>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6}{:<24}{:>10}{:>10}", "No.", "Class", "Samples", "Acc (%)");
        for (i, acc) in self.per_class_accuracy().iter().enumerate() {
            let name = class_names
                .and_then(|n| n.get(i).cloned())
                .unwrap_or_else(|| format!("class {}", i + 1));
            let acc = acc.map_or_else(|| "-".to_string(), |a| format!("{:.2}", a * 100.0));
            let _ = writeln!(out, "{:<6}{:<24}{:>10}{:>10}", format!("C{}", i + 1), name, self.row_sum(i + 1), acc);
        }
        let fmt_pct = |r: Result<f64, MetricsError>| r.map_or("-".into(), |v| format!("{:.2}", v * 100.0));
        let _ = writeln!(out, "{:<30}{:>20}", "OA (%)", fmt_pct(self.overall_accuracy()));
        let _ = writeln!(out, "{:<30}{:>20}", "AA (%)", fmt_pct(self.average_accuracy()));
        let _ = writeln!(
            out,
            "{:<30}{:>20}",
            "Kappa",
            self.kappa().map_or("-".into(), |v| format!("{v:.4}"))
        );
        out
    }
}
