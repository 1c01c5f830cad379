use crate::error::{Error, Result};

use super::{FeatureMatrix, Matrix};

const STD_FLOOR: f64 = 1e-8;

/// Per-bin mean and standard deviation of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes one row of `n_bins` values in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }

    pub fn apply_row_f32(&self, row: &mut [f32]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = ((*x as f64 - m) / s) as f32;
        }
    }
}

/// Streaming per-bin moments; frames may arrive from any number of matrices.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(n_bins: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; n_bins],
            sum_sq: vec![0.0; n_bins],
        }
    }

    pub fn push_row<T: Copy + Into<f64>>(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.sum.len() {
            return Err(Error::BinMismatch {
                expected: self.sum.len(),
                found: row.len(),
            });
        }
        for (i, &x) in row.iter().enumerate() {
            let x: f64 = x.into();
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<FeatureStats> {
        if self.count == 0 {
            return Err(Error::InsufficientData(
                "no frames to compute statistics".into(),
            ));
        }
        let n = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Ok(FeatureStats { mean, std })
    }
}

/// Standardizes every bin to zero mean and unit variance. When `stats` is
/// `None` they are computed from `features` (the training set) and returned for
/// reuse on held-out data.
pub fn standardize(
    features: &[FeatureMatrix],
    stats: Option<&FeatureStats>,
) -> Result<(Vec<FeatureMatrix>, FeatureStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let n_bins = features
                .first()
                .map(|f| f.n_bins())
                .ok_or_else(|| Error::InsufficientData("no feature matrices".into()))?;
            let mut acc = StatsAccumulator::new(n_bins);
            for f in features {
                for row in f.values.iter_rows() {
                    acc.push_row(row)?;
                }
            }
            acc.finish()?
        }
    };
    let out = features
        .iter()
        .map(|f| {
            if f.n_bins() != stats.n_bins() {
                return Err(Error::BinMismatch {
                    expected: stats.n_bins(),
                    found: f.n_bins(),
                });
            }
            let mut values = Matrix::clone(&f.values);
            for r in 0..values.rows() {
                stats.apply_row(values.row_mut(r));
            }
            Ok(FeatureMatrix {
                values,
                kind: f.kind,
                config_digest: f.config_digest.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, stats))
}
