use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::label::KinitLabel;

use super::FeatureConfig;

/// A fixed-length window cut from a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub parent_id: String,
    pub start_sample: usize,
    pub label: Option<KinitLabel>,
}

impl Segment {
    /// Wraps a bare sample buffer, mostly useful in tests and bindings.
    pub fn from_samples(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
            parent_id: String::new(),
            start_sample: 0,
            label: None,
        }
    }
}

/// Number of segments a clip of `clip_len` samples yields, or 0 if it is too
/// short for one.
pub fn segment_count(clip_len: usize, seg_len: usize, step: usize) -> usize {
    if clip_len < seg_len || seg_len == 0 {
        0
    } else {
        (clip_len - seg_len) / step + 1
    }
}

/// Start offsets of every full-length window; the trailing remainder is dropped.
pub fn segment_starts(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<usize>> {
    let len = cfg.segment_len(clip.sample_rate_hz);
    let step = cfg.segment_step(clip.sample_rate_hz);
    let count = segment_count(clip.samples.len(), len, step);
    if count == 0 {
        return Err(Error::ClipTooShort {
            clip_id: clip.source_id.clone(),
            len: clip.samples.len(),
            needed: len,
        });
    }
    Ok((0..count).map(|k| k * step).collect())
}

/// Cuts a clip into overlapping windows of `segment_seconds`.
pub fn segment_clip(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<Segment>> {
    let len = cfg.segment_len(clip.sample_rate_hz);
    Ok(segment_starts(clip, cfg)?
        .into_iter()
        .map(|start| Segment {
            samples: clip.samples[start..start + len].to_vec(),
            sample_rate_hz: clip.sample_rate_hz,
            parent_id: clip.source_id.clone(),
            start_sample: start,
            label: clip.label,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    fn clip(seconds: f64) -> AudioClip {
        AudioClip::new(vec![0.0; (seconds * 16000.0).round() as usize], 16000, "c")
            .with_label(Some(KinitLabel::Bati))
    }

    #[test]
    fn thirty_second_clip() {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc, 3.0);
        let segs = segment_clip(&clip(30.0), &cfg).unwrap();
        assert_eq!(segs.len(), 19);
        assert_eq!(segs[1].start_sample, 24000);
        assert_eq!(segs[18].start_sample, 27 * 16000);
        assert!(segs.iter().all(|s| s.samples.len() == 48000));
        assert!(segs.iter().all(|s| s.label == Some(KinitLabel::Bati)));
    }

    #[test]
    fn boundaries() {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc, 5.0);
        assert_eq!(segment_clip(&clip(5.0), &cfg).unwrap().len(), 1);
        assert!(matches!(
            segment_clip(&clip(4.9), &cfg),
            Err(Error::ClipTooShort { needed: 80000, .. })
        ));
    }

    #[test]
    fn counts_per_length() {
        for (len, expected) in [(1.0, 59), (3.0, 19), (5.0, 11)] {
            let cfg = FeatureConfig::new(FeatureKind::Mfcc, len);
            assert_eq!(segment_starts(&clip(30.0), &cfg).unwrap().len(), expected);
        }
    }
}
