use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use kinit::annotation::{fleiss_kappa, majority_category, read_votes_csv};
use kinit::audio_io::CORPUS_RATE_HZ;
use kinit::dataset::{
    make_synth_corpus, scan_dataset, split, Manifest, SplitFractions, SplitTag, SynthSpec,
};
use kinit::ekm::{train, EkmModel, Example, ModelConfig, TrainConfig};
use kinit::experiments::{
    evaluate, experiment_features, experiment_lengths, experiment_timing, load_clip,
    ExperimentOptions, ExperimentResult, RunSeeds,
};
use kinit::features::{
    read_feature_file, segment_clip, write_feature_file, FeatureConfig, FeatureExtractor,
    FeatureMatrix,
};
use kinit::seed::sub_seed;
use kinit::{KinitLabel, N_CLASSES};

use crate::{Cli, Command, UsageError};

const THREADS_ENV: &str = "KINIT_THREADS";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

/// Worker threads from `KINIT_THREADS`; `Some(0)` means run sequentially.
fn configured_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got '{v}'"
            ))
        }),
        Err(_) => Ok(None),
    }
}

struct Runtime {
    /// Use the rayon pool for featurization and evaluation.
    parallel: bool,
    /// Keep training batches on one thread.
    sequential_training: bool,
}

fn runtime(cli: &Cli) -> Result<Runtime> {
    let threads = configured_threads()?;
    if let Some(n) = threads.filter(|&n| n > 0) {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let parallel = threads != Some(0);
    Ok(Runtime {
        parallel,
        sequential_training: cli.deterministic || !parallel,
    })
}

fn out_path(explicit: &Option<PathBuf>, cli: &Cli, what: &str) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| cli.out_dir.clone())
        .ok_or_else(|| usage(format!("{what}: pass --out or the global --out-dir")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn run(cli: &Cli) -> Result<()> {
    log::info!(
        "config: seed={} deterministic={} out_dir={:?} {}={:?} command={:?}",
        cli.seed,
        cli.deterministic,
        cli.out_dir,
        THREADS_ENV,
        std::env::var(THREADS_ENV).ok(),
        cli.command
    );
    let rt = runtime(cli)?;
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Scan(a) => scan(a),
        Command::Split(a) => split_cmd(cli, a),
        Command::Extract(a) => extract(cli, &rt, a),
        Command::Train(a) => train_cmd(cli, &rt, a),
        Command::Eval(a) => eval_cmd(cli, &rt, a),
        Command::Kappa(a) => kappa(a),
        Command::Experiment(a) => experiment(cli, &rt, a),
        Command::Report(a) => report(cli, a),
    }
}

fn print_class_counts(what: &str, counts: &[usize; N_CLASSES]) {
    let parts: Vec<String> = KinitLabel::ALL
        .iter()
        .zip(counts)
        .map(|(l, c)| format!("{l}={c}"))
        .collect();
    println!(
        "{what}: {} ({})",
        counts.iter().sum::<usize>(),
        parts.join(", ")
    );
}

fn synth(cli: &Cli, a: &crate::SynthArgs) -> Result<()> {
    if a.classes != N_CLASSES {
        return Err(usage(format!("--classes must be {N_CLASSES}")));
    }
    let dir = out_path(&a.out, cli, "synth")?;
    create_dir(&dir)?;
    let spec = SynthSpec {
        seed: sub_seed(cli.seed, "synth"),
        ..SynthSpec::default()
    };
    let manifest = make_synth_corpus(&spec, a.per_class, &dir)?;
    let path = dir.join("manifest.csv");
    manifest.write_csv(&path)?;
    print_class_counts("clips", &manifest.class_counts());
    println!("manifest: {}", path.display());
    Ok(())
}

fn scan(a: &crate::ScanArgs) -> Result<()> {
    require_exists(&a.root)?;
    let manifest = scan_dataset(&a.root)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    let path = a.out.clone().unwrap_or_else(|| a.root.join("manifest.csv"));
    manifest.write_csv(&path)?;
    print_class_counts("clips", &manifest.class_counts());
    println!("manifest: {}", path.display());
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    require_exists(path)?;
    Ok(Manifest::read_csv(path)?)
}

fn split_cmd(cli: &Cli, a: &crate::SplitArgs) -> Result<()> {
    let mut manifest = read_manifest(&a.manifest)?;
    let fractions = SplitFractions {
        train: a.train,
        val: a.val,
        test: a.test,
    };
    let spec = split(&manifest, fractions, RunSeeds::from_seed(cli.seed).split)?;
    manifest.apply_split(&spec);
    let out = a.out.clone().unwrap_or_else(|| a.manifest.clone());
    manifest.write_csv(&out)?;
    for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
        println!("{tag}: {} clips", spec.count(tag));
    }
    println!("manifest: {}", out.display());
    Ok(())
}

fn feature_file_name(clip_id: &str, k: usize) -> String {
    format!("{clip_id}_seg{k}.feat")
}

fn extract(cli: &Cli, rt: &Runtime, a: &crate::ExtractArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let cfg = FeatureConfig::new(a.kind, a.len);
    cfg.validate()?;
    let dir = out_path(&a.out, cli, "extract")?;
    create_dir(&dir)?;
    let extractor = FeatureExtractor::new(&cfg, CORPUS_RATE_HZ)?;

    let one = |entry: &kinit::dataset::ManifestEntry| -> kinit::Result<std::result::Result<usize, String>> {
        let clip = load_clip(entry)?;
        let segments = match segment_clip(&clip, &cfg) {
            Ok(s) => s,
            Err(e @ kinit::Error::ClipTooShort { .. }) => return Ok(Err(e.to_string())),
            Err(e) => return Err(e),
        };
        for (k, seg) in segments.iter().enumerate() {
            let fm = extractor.extract(seg)?;
            write_feature_file(dir.join(feature_file_name(&entry.clip_id, k)), &fm)?;
        }
        Ok(Ok(segments.len()))
    };
    let results: Vec<_> = if rt.parallel {
        manifest
            .entries
            .par_iter()
            .map(one)
            .collect::<kinit::Result<_>>()?
    } else {
        manifest
            .entries
            .iter()
            .map(one)
            .collect::<kinit::Result<_>>()?
    };

    let mut counts = [0usize; N_CLASSES];
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(n) => counts[entry.label.index()] += n,
            Err(msg) => log::warn!("{}: {msg}", entry.clip_id),
        }
    }
    println!(
        "kind={} len={}s frames={} bins={} digest={}",
        cfg.kind,
        cfg.segment_seconds,
        cfg.n_frames(CORPUS_RATE_HZ),
        cfg.n_bins(),
        extractor.digest()
    );
    print_class_counts("segments", &counts);
    Ok(())
}

struct LoadedFeatures {
    /// (clip_id, segment index, label, matrix), sorted by clip then segment.
    items: Vec<(String, usize, KinitLabel, FeatureMatrix)>,
    assignment: BTreeMap<String, SplitTag>,
}

fn parse_feature_name(path: &Path) -> Option<(String, usize)> {
    let stem = path.file_stem()?.to_str()?;
    let (clip, k) = stem.rsplit_once("_seg")?;
    Some((clip.to_string(), k.parse().ok()?))
}

/// Reads every `.feat` file for the manifest's clips and resolves the split:
/// the one recorded in the manifest, else a fresh seeded split.
fn load_features(cli: &Cli, manifest_path: &Path, dir: &Path) -> Result<LoadedFeatures> {
    let manifest = read_manifest(manifest_path)?;
    require_exists(dir)?;
    let assignment = match manifest.recorded_split() {
        Some(a) => a,
        None => {
            log::info!(
                "manifest has no split; deriving one from --seed {}",
                cli.seed
            );
            split(
                &manifest,
                SplitFractions::default(),
                RunSeeds::from_seed(cli.seed).split,
            )?
            .assignment
        }
    };
    let mut paths: Vec<(String, usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("feat") {
            continue;
        }
        match parse_feature_name(&path) {
            Some((clip, k)) => paths.push((clip, k, path)),
            None => log::warn!("{}: not a <clip>_seg<k>.feat name, skipped", path.display()),
        }
    }
    paths.sort();
    let mut items = Vec::new();
    for (clip, k, path) in paths {
        let Some(entry) = manifest.get(&clip) else {
            log::warn!("{}: clip not in manifest, skipped", path.display());
            continue;
        };
        items.push((clip, k, entry.label, read_feature_file(&path)?));
    }
    if items.is_empty() {
        return Err(usage(format!(
            "no feature files for manifest clips in {}",
            dir.display()
        )));
    }
    let digest = &items[0].3.config_digest;
    if let Some(bad) = items.iter().find(|i| &i.3.config_digest != digest) {
        return Err(usage(format!(
            "feature files were made with different settings ({} vs {})",
            bad.0, items[0].0
        )));
    }
    Ok(LoadedFeatures { items, assignment })
}

impl LoadedFeatures {
    fn raw_examples(&self, keep: impl Fn(Option<SplitTag>) -> bool) -> Vec<Example> {
        self.items
            .iter()
            .filter(|(clip, ..)| keep(self.assignment.get(clip).copied()))
            .map(|(clip, _, label, fm)| Example {
                input: fm.values.data().iter().map(|&v| v as f32).collect(),
                label: label.index(),
                clip_id: clip.clone(),
            })
            .collect()
    }

    fn prepared_examples(
        &self,
        model: &EkmModel<f32>,
        keep: impl Fn(Option<SplitTag>) -> bool,
    ) -> Result<Vec<Example>> {
        self.items
            .iter()
            .filter(|(clip, ..)| keep(self.assignment.get(clip).copied()))
            .map(|(clip, _, label, fm)| {
                Ok(Example {
                    input: model.prepare_input(fm)?,
                    label: label.index(),
                    clip_id: clip.clone(),
                })
            })
            .collect()
    }
}

fn train_cmd(cli: &Cli, rt: &Runtime, a: &crate::TrainArgs) -> Result<()> {
    let data = load_features(cli, &a.manifest, &a.features)?;
    let out = out_path(&a.out, cli, "train")?;
    create_dir(&out)?;
    let (frames, bins) = (data.items[0].3.n_frames(), data.items[0].3.n_bins());
    let seeds = RunSeeds::from_seed(cli.seed);

    let mut model = EkmModel::<f32>::new(ModelConfig::default(), frames, bins, seeds.init)?;
    let mut stats_acc = kinit::features::StatsAccumulator::new(bins);
    let train_raw = data.raw_examples(|t| t == Some(SplitTag::Train));
    for ex in &train_raw {
        for row in ex.input.chunks(bins) {
            stats_acc.push_row(row)?;
        }
    }
    model.input_stats = Some(stats_acc.finish()?);
    let train_set = data.prepared_examples(&model, |t| t == Some(SplitTag::Train))?;
    let val_set = data.prepared_examples(&model, |t| t == Some(SplitTag::Val))?;
    log::info!(
        "input {frames}x{bins}, {} parameters, {} train / {} val segments",
        model.n_params(),
        train_set.len(),
        val_set.len()
    );

    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: seeds.train,
        deterministic: rt.sequential_training,
        keep_best_val: a.keep_best_val,
    };
    let (model, history) = train(model, &train_set, &val_set, &cfg)?;
    let model_path = out.join("model.ekmw");
    model.save(&model_path)?;
    history.write_csv(out.join("history.csv"), !cli.deterministic)?;
    if let Some(last) = history.epochs.last() {
        println!(
            "epochs={} train_loss={:.4} train_acc={:.4} val_acc={}",
            last.epoch,
            last.train_loss,
            last.train_acc,
            last.val_acc
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    println!("model: {}", model_path.display());
    Ok(())
}

fn eval_cmd(cli: &Cli, rt: &Runtime, a: &crate::EvalArgs) -> Result<()> {
    let which: Option<SplitTag> = match a.split.as_str() {
        "all" => None,
        s => Some(s.parse().map_err(usage)?),
    };
    let data = load_features(cli, &a.manifest, &a.features)?;
    require_exists(&a.model)?;
    let model = EkmModel::<f32>::load(&a.model)?;
    let set = data.prepared_examples(&model, |t| which.is_none() || t == which)?;
    let report = evaluate(&model, &set, rt.parallel)?;

    println!(
        "segments={} accuracy={:.6}",
        report.n_segments, report.accuracy
    );
    if let Some(c) = report.clip_accuracy {
        println!("clip_accuracy={c:.6}");
    }
    let mut confusion = kinit::experiments::ConditionRow::measured("eval", None);
    confusion.push_run(&report);
    print!("{}", confusion.confusion_csv());
    for (l, m) in KinitLabel::ALL.iter().zip(&report.per_class) {
        println!(
            "{l}: precision={:.4} recall={:.4} f1={:.4}",
            m.precision, m.recall, m.f1
        );
    }
    if let Some(dir) = a.out.clone().or_else(|| cli.out_dir.clone()) {
        create_dir(&dir)?;
        fs::write(dir.join("confusion_eval.csv"), confusion.confusion_csv())?;
    }
    Ok(())
}

fn kappa(a: &crate::KappaArgs) -> Result<()> {
    require_exists(&a.votes)?;
    let table = read_votes_csv(&a.votes)?;
    let raters = table.ratings.raters_per_item();
    let n_all = table.ratings.n_items();
    let ratings = if a.exclude_rejected {
        table.ratings.filter_items(|row| {
            matches!(majority_category(row, raters, a.threshold), Ok(Some(c)) if c < N_CLASSES)
        })?
    } else {
        table.ratings.clone()
    };
    let mut accepted = [0usize; N_CLASSES];
    for row in table.ratings.rows() {
        if let Some(c) = majority_category(row, raters, a.threshold)?.filter(|&c| c < N_CLASSES) {
            accepted[c] += 1;
        }
    }
    let r = fleiss_kappa(&ratings, a.variant)?;
    println!(
        "items={} of {} raters={} categories={}",
        ratings.n_items(),
        n_all,
        raters,
        table.categories.join("|")
    );
    print_class_counts("accepted", &accepted);
    println!("p_bar_0={:.6} p_bar_e={:.6}", r.p_bar_0, r.p_bar_e);
    println!("kappa={:?}", r.kappa);
    Ok(())
}

fn experiment(cli: &Cli, rt: &Runtime, a: &crate::ExperimentArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let out = out_path(&a.out, cli, "experiment")?;
    let opts = ExperimentOptions {
        runs: a.runs,
        seed: cli.seed,
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            lr: a.lr,
            deterministic: rt.sequential_training,
            ..TrainConfig::default()
        },
        parallel: rt.parallel,
        out_dir: Some(out.clone()),
        include_timing: !cli.deterministic,
        ..ExperimentOptions::default()
    };
    let result: ExperimentResult = match a.which {
        1 => experiment_features(&manifest, &opts)?,
        2 => experiment_lengths(&manifest, &opts)?,
        _ => experiment_timing(&manifest, &opts)?,
    };
    print!("{}", result.summary(a.which == 3 || !cli.deterministic));
    println!("table: {}", out.join("table.csv").display());
    Ok(())
}

fn report(cli: &Cli, a: &crate::ReportArgs) -> Result<()> {
    let dir = a
        .dir
        .clone()
        .or_else(|| cli.out_dir.clone())
        .ok_or_else(|| usage("report: pass --dir or the global --out-dir"))?;
    let table = dir.join("table.csv");
    require_exists(&table)?;
    print_aligned(&fs::read_to_string(&table)?);
    let mut confusions: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("confusion_") && n.ends_with(".csv"))
        })
        .collect();
    confusions.sort();
    for p in confusions {
        println!("\n{}", p.file_name().unwrap_or_default().to_string_lossy());
        print_aligned(&fs::read_to_string(&p)?);
    }
    Ok(())
}

/// Prints simple (unquoted) CSV as space-aligned columns.
fn print_aligned(csv_text: &str) {
    let rows: Vec<Vec<&str>> = csv_text.lines().map(|l| l.split(',').collect()).collect();
    let n = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..n)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        println!("{}", cells.join("  ").trim_end());
    }
}
