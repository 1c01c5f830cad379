//! Judge vote aggregation and chance-corrected agreement.
//!
//! For `N` items each rated by `n` raters into `k` categories, with `n_ij` the
//! number of raters putting item `i` in category `j`:
//!
//! ```text
//! P_i  = (Σ_j n_ij² − n) / (n (n − 1))
//! p̄₀   = mean_i P_i
//! p̄ₑ   = Σ_j p_j²,  p_j = Σ_i n_ij / (N n)      (Fleiss, fixed marginals)
//! p̄ₑ   = 1 / k                                  (free marginals)
//! κ    = (p̄₀ − p̄ₑ) / (1 − p̄ₑ)
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::label::{KinitLabel, N_CLASSES};

/// Number of judges per clip in the corpus.
pub const EMIR_RATERS: usize = 5;

/// Votes needed for a clip to be accepted.
pub const MAJORITY_THRESHOLD: usize = 3;

/// Category name used in vote files for "fits none of the four".
pub const REJECT_CATEGORY: &str = "Rejected";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingsMatrix {
    counts: Vec<Vec<usize>>,
    raters_per_item: usize,
}

impl RatingsMatrix {
    pub fn new(counts: Vec<Vec<usize>>, raters_per_item: usize) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InsufficientData(
                "ratings matrix has no items".into(),
            ));
        }
        let k = counts[0].len();
        if k < 2 {
            return Err(Error::InsufficientData(
                "need at least two categories".into(),
            ));
        }
        if raters_per_item < 2 {
            return Err(Error::InsufficientData(
                "need at least two raters per item".into(),
            ));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("{} categories, expected {k}", row.len()),
                });
            }
            let sum: usize = row.iter().sum();
            if sum != raters_per_item {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("votes sum to {sum}, expected {raters_per_item}"),
                });
            }
        }
        Ok(Self {
            counts,
            raters_per_item,
        })
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub fn n_categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters_per_item(&self) -> usize {
        self.raters_per_item
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.counts
    }

    /// Keeps only the items `keep` accepts.
    pub fn filter_items(&self, mut keep: impl FnMut(&[usize]) -> bool) -> Result<Self> {
        let counts = self.counts.iter().filter(|r| keep(r)).cloned().collect();
        Self::new(counts, self.raters_per_item)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaVariant {
    Fleiss,
    FreeMarginal,
}

impl FromStr for KappaVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fleiss" => Ok(KappaVariant::Fleiss),
            "free-marginal" | "free" | "randolph" => Ok(KappaVariant::FreeMarginal),
            other => Err(format!(
                "unknown kappa variant '{other}' (fleiss|free-marginal)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementReport {
    pub p_bar_0: f64,
    pub p_bar_e: f64,
    pub kappa: f64,
    pub variant: KappaVariant,
}

/// The category reaching `threshold` votes, if exactly one does.
pub fn majority_category(
    votes: &[usize],
    raters_per_item: usize,
    threshold: usize,
) -> Result<Option<usize>> {
    let sum: usize = votes.iter().sum();
    if sum != raters_per_item {
        return Err(Error::MalformedRow {
            row: 0,
            reason: format!("votes sum to {sum}, expected {raters_per_item}"),
        });
    }
    let mut winners = votes.iter().enumerate().filter(|(_, &c)| c >= threshold);
    match (winners.next(), winners.next()) {
        (Some((i, _)), None) => Ok(Some(i)),
        _ => Ok(None),
    }
}

/// Accepted label for one clip's four-category vote counts (five judges,
/// three-vote threshold by default). Extra columns beyond the four Kiñits,
/// such as a rejection count, take part in the sum but never win a label.
pub fn majority_label(votes: &[usize], threshold: usize) -> Result<Option<KinitLabel>> {
    Ok(majority_category(votes, EMIR_RATERS, threshold)?.and_then(KinitLabel::from_index))
}

pub fn fleiss_kappa(m: &RatingsMatrix, variant: KappaVariant) -> Result<AgreementReport> {
    let n = m.raters_per_item as f64;
    let n_items = m.n_items() as f64;
    let k = m.n_categories();

    let p_bar_0 = m
        .counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / n_items;

    let p_bar_e = match variant {
        KappaVariant::Fleiss => (0..k)
            .map(|j| {
                let col: usize = m.counts.iter().map(|r| r[j]).sum();
                let p = col as f64 / (n_items * n);
                p * p
            })
            .sum(),
        KappaVariant::FreeMarginal => 1.0 / k as f64,
    };

    if (1.0 - p_bar_e).abs() < 1e-15 {
        return Err(Error::DegenerateAgreement);
    }
    Ok(AgreementReport {
        p_bar_0,
        p_bar_e,
        kappa: (p_bar_0 - p_bar_e) / (1.0 - p_bar_e),
        variant,
    })
}

/// Per-clip votes read from a judges CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    pub clip_ids: Vec<String>,
    /// Category names, column order of the ratings matrix.
    pub categories: Vec<String>,
    pub ratings: RatingsMatrix,
}

/// Reads `clip_id,judge1,…,judgeN` rows whose cells are Kiñit names or
/// `Rejected`. The four Kiñits are always categories; `Rejected` becomes a
/// fifth category only when some judge used it.
pub fn read_votes_csv(path: impl AsRef<Path>) -> Result<VoteTable> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    let headers = r.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "clip_id" {
        return Err(Error::format(
            path,
            "expected header clip_id,judge1,judge2,...",
        ));
    }
    let n_judges = headers.len() - 1;
    let mut clip_ids = Vec::new();
    let mut raw: Vec<Vec<Option<KinitLabel>>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        clip_ids.push(rec[0].to_string());
        let votes = (1..=n_judges)
            .map(|j| {
                let cell = rec[j].trim();
                if cell.eq_ignore_ascii_case(REJECT_CATEGORY) || cell.eq_ignore_ascii_case("reject")
                {
                    Ok(None)
                } else {
                    cell.parse::<KinitLabel>()
                        .map(Some)
                        .map_err(|e| Error::MalformedRow {
                            row: i + 1,
                            reason: e,
                        })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push(votes);
    }
    let any_reject = raw.iter().flatten().any(Option::is_none);
    let k = if any_reject { N_CLASSES + 1 } else { N_CLASSES };
    let counts = raw
        .iter()
        .map(|votes| {
            let mut row = vec![0usize; k];
            for v in votes {
                row[v.map_or(N_CLASSES, KinitLabel::index)] += 1;
            }
            row
        })
        .collect();
    let mut categories: Vec<String> = KinitLabel::ALL
        .iter()
        .map(|l| l.name().to_string())
        .collect();
    if any_reject {
        categories.push(REJECT_CATEGORY.to_string());
    }
    Ok(VoteTable {
        clip_ids,
        categories,
        ratings: RatingsMatrix::new(counts, n_judges)?,
    })
}
