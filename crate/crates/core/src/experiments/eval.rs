use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::ekm::{aggregate_votes, argmax, EkmModel, Example};
use crate::error::{Error, Result};
use crate::label::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Segment-level test results. Confusion rows are ground truth, columns are
/// predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
    pub per_class: [ClassMetrics; N_CLASSES],
    pub n_segments: usize,
    pub wall_clock_train_s: f64,
    /// Accuracy of per-clip majority votes, when clip ids are known.
    pub clip_accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Builds the report from parallel truth/prediction class indices.
    pub fn from_predictions(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch(
                "truth and prediction lengths differ".into(),
            ));
        }
        let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= N_CLASSES || p >= N_CLASSES {
                return Err(Error::ShapeMismatch(format!(
                    "class index out of range ({t}, {p})"
                )));
            }
            confusion[t][p] += 1;
        }
        let trace: u64 = (0..N_CLASSES).map(|i| confusion[i][i]).sum();
        let per_class = std::array::from_fn(|c| {
            let tp = confusion[c][c];
            let predicted_c: u64 = (0..N_CLASSES).map(|r| confusion[r][c]).sum();
            let actual_c: u64 = confusion[c].iter().sum();
            let precision = ratio(tp, predicted_c);
            let recall = ratio(tp, actual_c);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
            }
        });
        let report = Self {
            accuracy: trace as f64 / truth.len() as f64,
            confusion,
            per_class,
            n_segments: truth.len(),
            wall_clock_train_s: 0.0,
            clip_accuracy: None,
        };
        report.check_conservation(truth)?;
        Ok(report)
    }

    /// Total count equals the number of segments, row sums equal the true
    /// class counts, and accuracy equals trace / total.
    pub fn check_conservation(&self, truth: &[usize]) -> Result<()> {
        let total: u64 = self.confusion.iter().flatten().sum();
        if total as usize != self.n_segments || truth.len() != self.n_segments {
            return Err(Error::Invariant(format!(
                "confusion total {total} vs {} segments",
                self.n_segments
            )));
        }
        for c in 0..N_CLASSES {
            let row: u64 = self.confusion[c].iter().sum();
            let actual = truth.iter().filter(|&&t| t == c).count() as u64;
            if row != actual {
                return Err(Error::Invariant(format!(
                    "row {c} sums to {row}, class has {actual}"
                )));
            }
        }
        let trace: u64 = (0..N_CLASSES).map(|i| self.confusion[i][i]).sum();
        if (trace as f64 / total as f64 - self.accuracy).abs() > 1e-12 {
            return Err(Error::Invariant(
                "accuracy disagrees with confusion trace".into(),
            ));
        }
        Ok(())
    }
}

/// Predicted class and probabilities for every example.
pub fn predict_all(
    model: &EkmModel<f32>,
    set: &[Example],
    parallel: bool,
) -> Result<Vec<Vec<f32>>> {
    let one = |ex: &Example| model.predict_input(&ex.input);
    if parallel {
        set.par_iter().map(one).collect()
    } else {
        set.iter().map(one).collect()
    }
}

/// Segment-level evaluation with a clip-level majority-vote column.
pub fn evaluate(model: &EkmModel<f32>, test: &[Example], parallel: bool) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let probs = predict_all(model, test, parallel)?;
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let truth: Vec<usize> = test.iter().map(|e| e.label).collect();
    let mut report = EvalReport::from_predictions(&truth, &predicted)?;

    let mut by_clip: BTreeMap<&str, (usize, Vec<Vec<f32>>)> = BTreeMap::new();
    for (ex, p) in test.iter().zip(probs) {
        by_clip
            .entry(ex.clip_id.as_str())
            .or_insert_with(|| (ex.label, Vec::new()))
            .1
            .push(p);
    }
    let mut clip_correct = 0usize;
    for (label, p) in by_clip.values() {
        if aggregate_votes(p)?.label.index() == *label {
            clip_correct += 1;
        }
    }
    report.clip_accuracy = Some(clip_correct as f64 / by_clip.len() as f64);
    Ok(report)
}
