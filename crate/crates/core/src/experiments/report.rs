use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::label::{KinitLabel, N_CLASSES};

use super::EvalReport;

/// Marker written next to reference numbers that come from the literature and
/// were not produced by this code.
pub const PUBLISHED_NOTE: &str = "published (not recomputed)";

/// Published EMIR mean accuracies per feature kind at 3 s.
pub const PUBLISHED_FEATURES: [(FeatureKind, f64); 4] = [
    (FeatureKind::FilterBank, 0.8933),
    (FeatureKind::MelSpec, 0.9283),
    (FeatureKind::Chroma, 0.8550),
    (FeatureKind::Mfcc, 0.9500),
];

/// Published EMIR MFCC accuracies per segment length in seconds.
pub const PUBLISHED_LENGTHS: [(f64, f64); 3] = [(1.0, 0.9444), (3.0, 0.9500), (5.0, 0.9028)];

/// Published EKM accuracy and training time.
pub const PUBLISHED_EKM: (&str, f64, &str) = ("ekm", 0.9500, "00:09:17");

/// Published baseline accuracies and training times. These architectures are
/// not implemented here.
pub const PUBLISHED_BASELINES: [(&str, f64, &str); 4] = [
    ("lstm", 0.8750, "00:08:46"),
    ("alexnet", 0.8983, "01:09:41"),
    ("resnet50", 0.9050, "01:37:04"),
    ("vgg16", 0.9300, "01:34:09"),
];

/// `HH:MM:SS`, rounded to the nearest second. Hours are not wrapped.
pub fn format_hms(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!(
        "{:02}:{:02}:{:02}",
        total / 3600,
        (total / 60) % 60,
        total % 60
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Measured,
    Published,
}

impl RowSource {
    pub fn name(self) -> &'static str {
        match self {
            RowSource::Measured => "measured",
            RowSource::Published => PUBLISHED_NOTE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub condition: String,
    pub source: RowSource,
    pub accuracies: Vec<f64>,
    pub clip_accuracies: Vec<f64>,
    pub train_seconds: Vec<f64>,
    /// Summed over runs.
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
    pub reference_accuracy: Option<f64>,
    pub reference_time: Option<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ConditionRow {
    pub fn measured(condition: &str, reference_accuracy: Option<f64>) -> Self {
        Self {
            condition: condition.to_string(),
            source: RowSource::Measured,
            accuracies: Vec::new(),
            clip_accuracies: Vec::new(),
            train_seconds: Vec::new(),
            confusion: [[0; N_CLASSES]; N_CLASSES],
            reference_accuracy,
            reference_time: None,
        }
    }

    pub fn published(condition: &str, accuracy: f64, time: &str) -> Self {
        Self {
            source: RowSource::Published,
            reference_accuracy: Some(accuracy),
            reference_time: Some(time.to_string()),
            ..Self::measured(condition, None)
        }
    }

    pub fn push_run(&mut self, report: &EvalReport) {
        self.accuracies.push(report.accuracy);
        if let Some(c) = report.clip_accuracy {
            self.clip_accuracies.push(c);
        }
        self.train_seconds.push(report.wall_clock_train_s);
        for (dst, src) in self.confusion.iter_mut().zip(&report.confusion) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        mean(&self.accuracies)
    }

    pub fn mean_clip_accuracy(&self) -> Option<f64> {
        mean(&self.clip_accuracies)
    }

    pub fn mean_train_seconds(&self) -> Option<f64> {
        mean(&self.train_seconds)
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\predicted");
        for l in KinitLabel::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (l, row) in KinitLabel::ALL.iter().zip(&self.confusion) {
            out.push_str(l.name());
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Rows of one experiment. Measured rows carry one accuracy per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub runs: usize,
    pub rows: Vec<ConditionRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ExperimentResult {
    pub fn new(name: &str, runs: usize) -> Self {
        Self {
            name: name.to_string(),
            runs,
            rows: Vec::new(),
        }
    }

    pub fn measured_rows(&self) -> impl Iterator<Item = &ConditionRow> {
        self.rows.iter().filter(|r| r.source == RowSource::Measured)
    }

    /// At least one run, and every mean lies within its runs' range.
    pub fn check(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Invariant("experiment has no runs".into()));
        }
        for row in self.measured_rows() {
            if row.accuracies.len() != self.runs {
                return Err(Error::Invariant(format!(
                    "{}: {} runs recorded, expected {}",
                    row.condition,
                    row.accuracies.len(),
                    self.runs
                )));
            }
            let m = row.mean_accuracy().unwrap_or(f64::NAN);
            let lo = row.accuracies.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row
                .accuracies
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if !(lo - 1e-12..=hi + 1e-12).contains(&m) {
                return Err(Error::Invariant(format!(
                    "{}: mean {m} outside [{lo}, {hi}]",
                    row.condition
                )));
            }
        }
        Ok(())
    }

    /// `table.csv` text. Published rows fill the mean and time columns with
    /// their reference values and leave the per-run columns empty.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("condition,source");
        for r in 1..=self.runs {
            let _ = write!(out, ",run_{r}");
        }
        out.push_str(
            ",mean_accuracy,mean_clip_accuracy,train_time,reference_accuracy,reference_time\n",
        );
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.condition, row.source.name());
            for r in 0..self.runs {
                out.push(',');
                out.push_str(&fmt_opt(row.accuracies.get(r).copied()));
            }
            match row.source {
                RowSource::Measured => {
                    let time = if include_timing {
                        row.mean_train_seconds().map(format_hms).unwrap_or_default()
                    } else {
                        String::new()
                    };
                    let _ = writeln!(
                        out,
                        ",{},{},{},{},{}",
                        fmt_opt(row.mean_accuracy()),
                        fmt_opt(row.mean_clip_accuracy()),
                        time,
                        fmt_opt(row.reference_accuracy),
                        row.reference_time.clone().unwrap_or_default()
                    );
                }
                RowSource::Published => {
                    let _ = writeln!(
                        out,
                        ",{},,{},,",
                        fmt_opt(row.reference_accuracy),
                        row.reference_time.clone().unwrap_or_default()
                    );
                }
            }
        }
        out
    }

    /// Writes `table.csv` and one `confusion_<condition>.csv` per measured row.
    pub fn write(&self, dir: &Path, include_timing: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        put("table.csv".into(), self.to_csv(include_timing))?;
        for row in self.measured_rows() {
            put(
                format!("confusion_{}.csv", row.condition),
                row.confusion_csv(),
            )?;
        }
        Ok(())
    }

    /// Plain-text table for the terminal, accuracies in percent.
    pub fn summary(&self, include_timing: bool) -> String {
        let mut out = format!(
            "{:<12} {:>9} {:>9} {:>10} {:>9}  {}\n",
            "condition", "accuracy", "clip_acc", "train", "reference", "source"
        );
        let pct = |v: Option<f64>| {
            v.map(|x| format!("{:.2}", 100.0 * x))
                .unwrap_or_else(|| "-".into())
        };
        for row in &self.rows {
            let (acc, time, reference) = match row.source {
                RowSource::Measured => (
                    row.mean_accuracy(),
                    if include_timing {
                        row.mean_train_seconds().map(format_hms)
                    } else {
                        None
                    },
                    row.reference_accuracy,
                ),
                RowSource::Published => (row.reference_accuracy, row.reference_time.clone(), None),
            };
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>9} {:>10} {:>9}  {}",
                row.condition,
                pct(acc),
                pct(row.mean_clip_accuracy()),
                time.unwrap_or_else(|| "-".into()),
                pct(reference),
                row.source.name()
            );
        }
        out
    }
}
