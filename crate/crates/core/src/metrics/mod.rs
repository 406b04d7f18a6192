//! Classification metrics and map rendering.

mod map;

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use map::{default_palette, parse_ppm, render_map, write_map, Rgb};

/// `K×K` counts; entry `[i][j]` is true class `i+1` predicted as `j+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::dim("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Counts one prediction; classes are 1-based.
    pub fn record(&mut self, truth: u16, predicted: u16) -> Result<()> {
        let k = self.classes;
        let (t, p) = (truth as usize, predicted as usize);
        if t == 0 || p == 0 || t > k || p > k {
            return Err(Error::Contract(format!(
                "classes ({truth}, {predicted}) outside 1..={k}"
            )));
        }
        self.counts[(t - 1) * k + p - 1] += 1;
        Ok(())
    }

    /// Count at zero-based `(truth, predicted)`.
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        let n = self.total();
        if n == 0 {
            return Err(Error::UndefinedMetric("overall accuracy of an empty matrix"));
        }
        Ok(self.trace() as f64 / n as f64)
    }

    /// Recall per class; `None` for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| match self.row_sum(i) {
                0 => None,
                r => Some(self.get(i, i) as f64 / r as f64),
            })
            .collect()
    }

    /// Mean recall over classes that have samples.
    pub fn average_accuracy(&self) -> Result<f64> {
        let present: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        if present.is_empty() {
            return Err(Error::UndefinedMetric("average accuracy with every class absent"));
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }

    /// Cohen's kappa, as `(N·tr − Σ rᵢcᵢ) / (N² − Σ rᵢcᵢ)` in exact integers
    /// followed by one division.
    pub fn kappa(&self) -> Result<f64> {
        let n = u128::from(self.total());
        if n == 0 {
            return Err(Error::UndefinedMetric("kappa of an empty matrix"));
        }
        let chance: u128 = (0..self.classes)
            .map(|i| u128::from(self.row_sum(i)) * u128::from(self.col_sum(i)))
            .sum();
        let denom = n * n - chance;
        if denom == 0 {
            return Err(Error::UndefinedMetric("kappa with chance agreement 1"));
        }
        let num = (n * u128::from(self.trace())) as i128 - chance as i128;
        Ok(num as f64 / denom as f64)
    }

    /// `OA`, `AA`, `kappa` then one `C<i>` line per class, 4 decimals.
    pub fn report(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "OA {:.4}", self.overall_accuracy()?);
        let _ = writeln!(out, "AA {:.4}", self.average_accuracy()?);
        match self.kappa() {
            Ok(k) => {
                let _ = writeln!(out, "kappa {k:.4}");
            }
            Err(_) => {
                let _ = writeln!(out, "kappa undefined");
            }
        }
        for (i, acc) in self.per_class_accuracy().into_iter().enumerate() {
            match acc {
                Some(a) => {
                    let _ = writeln!(out, "C{} {a:.4}", i + 1);
                }
                None => {
                    let _ = writeln!(out, "C{} absent", i + 1);
                }
            }
        }
        Ok(out)
    }
}
