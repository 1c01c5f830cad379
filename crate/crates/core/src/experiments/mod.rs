//! Repeated-run experiment harness: feature comparison, segment-length
//! comparison, and the timing table, with CSV report output.

mod eval;
mod pipeline;
mod report;

pub use eval::{evaluate, predict_all, ClassMetrics, EvalReport};
pub use pipeline::{extract_corpus, load_clip, ClipFeatures, CorpusFeatures, SplitExamples};
pub use report::{
    format_hms, ConditionRow, ExperimentResult, RowSource, PUBLISHED_BASELINES, PUBLISHED_EKM,
    PUBLISHED_FEATURES, PUBLISHED_LENGTHS, PUBLISHED_NOTE,
};

use std::path::PathBuf;

use crate::audio_io::CORPUS_RATE_HZ;
use crate::dataset::{split, Manifest, SplitFractions};
use crate::ekm::{build_ekm, train, ModelConfig, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind};
use crate::seed::sub_seed;

/// Seeds for one run, all derived from a single base value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub run: u64,
    pub split: u64,
    pub init: u64,
    /// Passed to the trainer, which derives its shuffle stream from it.
    pub train: u64,
}

impl RunSeeds {
    pub fn from_seed(run: u64) -> Self {
        Self {
            run,
            split: sub_seed(run, "split"),
            init: sub_seed(run, "init"),
            train: run,
        }
    }

    /// Run 0 uses `base` itself, so a single CLI run with `--seed S` matches
    /// the first experiment run.
    pub fn for_run(base: u64, index: usize) -> Self {
        if index == 0 {
            Self::from_seed(base)
        } else {
            Self::from_seed(sub_seed(base, &format!("run{index}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub runs: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub fractions: SplitFractions,
    /// Featurize clips and evaluate on the rayon pool.
    pub parallel: bool,
    /// Where `table.csv`, confusion, and history files go.
    pub out_dir: Option<PathBuf>,
    /// Write wall-clock columns. Off in deterministic mode so reruns are
    /// byte-identical.
    pub include_timing: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            runs: 5,
            seed: 42,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            fractions: SplitFractions::default(),
            parallel: false,
            out_dir: None,
            include_timing: false,
        }
    }
}

/// One trained-and-evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seeds: RunSeeds,
    pub report: EvalReport,
    pub history: TrainHistory,
}

/// Trains and evaluates one run on precomputed corpus features.
pub fn run_once(
    manifest: &Manifest,
    corpus: &CorpusFeatures,
    seeds: RunSeeds,
    opts: &ExperimentOptions,
) -> Result<RunOutcome> {
    let spec = split(manifest, opts.fractions, seeds.split)?;
    let sets = corpus.split_examples(&spec)?;
    let mut model = build_ekm(&opts.model, &corpus.config, CORPUS_RATE_HZ, seeds.init)?;
    model.input_stats = Some(sets.stats.clone());
    let cfg = TrainConfig {
        seed: seeds.train,
        ..opts.train.clone()
    };
    let (model, history) = train(model, &sets.train, &sets.val, &cfg)?;
    let mut report = evaluate(&model, &sets.test, opts.parallel)?;
    report.wall_clock_train_s = history.wall_clock_s;
    Ok(RunOutcome {
        seeds,
        report,
        history,
    })
}

/// Runs every seed for one feature configuration and collects the row.
pub fn run_condition(
    manifest: &Manifest,
    condition: &str,
    feature_cfg: &FeatureConfig,
    reference: Option<f64>,
    opts: &ExperimentOptions,
) -> Result<ConditionRow> {
    if opts.runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    let corpus = extract_corpus(manifest, feature_cfg, opts.parallel)?;
    log::info!(
        "{condition}: {} segments from {} clips",
        corpus.n_segments(),
        corpus.clips.len()
    );
    let mut row = ConditionRow::measured(condition, reference);
    for r in 0..opts.runs {
        let out = run_once(manifest, &corpus, RunSeeds::for_run(opts.seed, r), opts)?;
        log::info!(
            "{condition} run {}/{}: accuracy {:.4}, clip accuracy {:.4}, {:.1} s",
            r + 1,
            opts.runs,
            out.report.accuracy,
            out.report.clip_accuracy.unwrap_or(f64::NAN),
            out.report.wall_clock_train_s
        );
        if let Some(dir) = &opts.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            out.history.write_csv(
                dir.join(format!("history_{condition}_{}.csv", out.seeds.run)),
                opts.include_timing,
            )?;
        }
        row.push_run(&out.report);
    }
    Ok(row)
}

fn finish(result: ExperimentResult, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    result.check()?;
    if let Some(dir) = &opts.out_dir {
        result.write(dir, opts.include_timing)?;
    }
    Ok(result)
}

/// All four feature kinds at 3 s segments. Every kind sees the same split for
/// a given run index.
pub fn experiment_features(
    manifest: &Manifest,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new("features", opts.runs);
    for kind in FeatureKind::ALL {
        let reference = PUBLISHED_FEATURES
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|r| r.1);
        let cfg = FeatureConfig::new(kind, 3.0);
        result
            .rows
            .push(run_condition(manifest, kind.name(), &cfg, reference, opts)?);
    }
    finish(result, opts)
}

/// MFCC at 1, 3, and 5 s segments.
pub fn experiment_lengths(
    manifest: &Manifest,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new("lengths", opts.runs);
    for (secs, reference) in PUBLISHED_LENGTHS {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc, secs);
        let condition = format!("mfcc_{secs}s");
        result.rows.push(run_condition(
            manifest,
            &condition,
            &cfg,
            Some(reference),
            opts,
        )?);
    }
    finish(result, opts)
}

/// One MFCC 3 s run with its training time, next to the published baseline
/// rows. Training time is the measured quantity here, so it is always written.
pub fn experiment_timing(
    manifest: &Manifest,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult> {
    let once = ExperimentOptions {
        runs: 1,
        include_timing: true,
        ..opts.clone()
    };
    let mut result = ExperimentResult::new("timing", 1);
    let cfg = FeatureConfig::new(FeatureKind::Mfcc, 3.0);
    let mut row = run_condition(manifest, "ekm", &cfg, Some(PUBLISHED_EKM.1), &once)?;
    row.reference_time = Some(PUBLISHED_EKM.2.to_string());
    result.rows.push(row);
    for (name, acc, time) in PUBLISHED_BASELINES {
        result.rows.push(ConditionRow::published(name, acc, time));
    }
    finish(result, &once)
}
