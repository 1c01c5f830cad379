use rayon::prelude::*;

use crate::audio_io::{read_wav, resample_linear, AudioClip, CORPUS_RATE_HZ};
use crate::dataset::{Manifest, ManifestEntry, SplitSpec, SplitTag};
use crate::ekm::Example;
use crate::error::{Error, Result};
use crate::features::{
    segment_clip, FeatureConfig, FeatureExtractor, FeatureStats, StatsAccumulator,
};
use crate::label::KinitLabel;

/// Reads a manifest clip, resampled to the corpus rate and labeled.
pub fn load_clip(entry: &ManifestEntry) -> Result<AudioClip> {
    let mut clip = read_wav(&entry.path)?;
    if clip.sample_rate_hz != CORPUS_RATE_HZ {
        log::info!(
            "{}: resampling {} Hz to {} Hz",
            entry.clip_id,
            clip.sample_rate_hz,
            CORPUS_RATE_HZ
        );
        clip = resample_linear(&clip, CORPUS_RATE_HZ);
    }
    clip.source_id = entry.clip_id.clone();
    clip.label = Some(entry.label);
    Ok(clip)
}

/// Unstandardized segment features of one clip, each `frames × bins`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub label: KinitLabel,
    pub segments: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFeatures {
    pub config: FeatureConfig,
    pub n_frames: usize,
    pub n_bins: usize,
    pub clips: Vec<ClipFeatures>,
    /// Clips skipped because they were shorter than one segment.
    pub warnings: Vec<String>,
}

/// Standardized examples for one split, with the training-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitExamples {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub stats: FeatureStats,
}

fn clip_features(
    entry: &ManifestEntry,
    extractor: &FeatureExtractor,
) -> Result<Option<ClipFeatures>> {
    let clip = load_clip(entry)?;
    let segments = match segment_clip(&clip, extractor.config()) {
        Ok(s) => s,
        Err(Error::ClipTooShort { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let segments = segments
        .iter()
        .map(|s| {
            let fm = extractor.extract(s)?;
            Ok(fm.values.data().iter().map(|&v| v as f32).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Some(ClipFeatures {
        clip_id: entry.clip_id.clone(),
        label: entry.label,
        segments,
    }))
}

/// Segments and featurizes every manifest clip once. Features do not depend on
/// the split, so repeated runs reuse them.
pub fn extract_corpus(
    manifest: &Manifest,
    cfg: &FeatureConfig,
    parallel: bool,
) -> Result<CorpusFeatures> {
    cfg.validate()?;
    let extractor = FeatureExtractor::new(cfg, CORPUS_RATE_HZ)?;
    let results: Vec<Option<ClipFeatures>> = if parallel {
        manifest
            .entries
            .par_iter()
            .map(|e| clip_features(e, &extractor))
            .collect::<Result<_>>()?
    } else {
        manifest
            .entries
            .iter()
            .map(|e| clip_features(e, &extractor))
            .collect::<Result<_>>()?
    };
    let mut clips = Vec::new();
    let mut warnings = Vec::new();
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r {
            Some(c) => clips.push(c),
            None => {
                let msg = format!(
                    "{}: shorter than one {} s segment, skipped",
                    entry.clip_id, cfg.segment_seconds
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(CorpusFeatures {
        config: cfg.clone(),
        n_frames: cfg.n_frames(CORPUS_RATE_HZ),
        n_bins: cfg.n_bins(),
        clips,
        warnings,
    })
}

impl CorpusFeatures {
    pub fn n_segments(&self) -> usize {
        self.clips.iter().map(|c| c.segments.len()).sum()
    }

    fn examples(&self, split: &SplitSpec, tag: SplitTag) -> Vec<Example> {
        self.clips
            .iter()
            .filter(|c| split.assignment.get(&c.clip_id) == Some(&tag))
            .flat_map(|c| {
                c.segments.iter().map(|s| Example {
                    input: s.clone(),
                    label: c.label.index(),
                    clip_id: c.clip_id.clone(),
                })
            })
            .collect()
    }

    /// Per-bin statistics of the training segments, applied to all three sets.
    pub fn split_examples(&self, split: &SplitSpec) -> Result<SplitExamples> {
        let mut train = self.examples(split, SplitTag::Train);
        let mut val = self.examples(split, SplitTag::Val);
        let mut test = self.examples(split, SplitTag::Test);
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let mut acc = StatsAccumulator::new(self.n_bins);
        for ex in &train {
            for row in ex.input.chunks(self.n_bins) {
                acc.push_row(row)?;
            }
        }
        let stats = acc.finish()?;
        for ex in train
            .iter_mut()
            .chain(val.iter_mut())
            .chain(test.iter_mut())
        {
            for row in ex.input.chunks_mut(self.n_bins) {
                stats.apply_row_f32(row);
            }
        }
        Ok(SplitExamples {
            train,
            val,
            test,
            stats,
        })
    }
}
