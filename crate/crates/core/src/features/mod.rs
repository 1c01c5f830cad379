//! Segmentation and spectral feature extraction.
//!
//! Every feature family starts from the same reflect-centered, periodic-Hann
//! power spectrogram. FilterBank and MelSpec are natural-log mel energies with
//! 40 and 128 bands; MFCC keeps the first 13 orthonormal DCT-II coefficients of
//! the 40-band log energies; Chroma folds FFT bins into 12 pitch classes.

mod cache;
mod chroma;
mod config;
mod dct;
mod matrix;
mod mel;
mod segment;
mod standardize;
mod stft;

use rayon::prelude::*;

pub use cache::{read_feature_file, write_feature_file, FEATURE_FILE_VERSION};
pub use chroma::{bin_pitch_class, chroma_from_power};
pub use config::{FeatureConfig, FeatureKind};
pub use dct::dct_ii_matrix;
pub use matrix::Matrix;
pub use mel::{hz_to_mel, mel_edges_hz, mel_filterbank_matrix, mel_to_hz};
pub use segment::{segment_clip, segment_count, segment_starts, Segment};
pub use standardize::{standardize, FeatureStats, StatsAccumulator};
pub use stft::{periodic_hann, Stft};

use crate::error::{Error, Result};

/// A `frames × bins` feature array tagged with how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub kind: FeatureKind,
    /// Hex SHA-256 of the extraction parameters.
    pub config_digest: String,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.cols()
    }
}

/// Precomputed STFT plan, filterbank, and DCT basis for one configuration and
/// sample rate. Extraction is read-only, so one extractor can be shared across
/// threads.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    sample_rate_hz: u32,
    stft: Stft,
    filterbank: Option<Matrix>,
    dct: Option<Matrix>,
    digest: String,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig, sample_rate_hz: u32) -> Result<Self> {
        cfg.validate()?;
        let bands = match cfg.kind {
            FeatureKind::FilterBank => Some(cfg.n_filterbank),
            FeatureKind::MelSpec => Some(cfg.n_melspec),
            FeatureKind::Mfcc => Some(cfg.n_mfcc_bands),
            FeatureKind::Chroma => None,
        };
        let filterbank = bands
            .map(|n| mel_filterbank_matrix(n, cfg.fft_size, sample_rate_hz))
            .transpose()?;
        let dct = (cfg.kind == FeatureKind::Mfcc)
            .then(|| dct_ii_matrix(cfg.n_mfcc_coeffs, cfg.n_mfcc_bands));
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate_hz,
            stft: Stft::new(cfg.fft_size, cfg.hop_size),
            filterbank,
            dct,
            digest: hex::encode(cfg.digest(sample_rate_hz)),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn power(&self, samples: &[f32]) -> Matrix {
        self.stft.power(samples)
    }

    fn log_mel(&self, power: &Matrix) -> Matrix {
        let fb = self
            .filterbank
            .as_ref()
            .expect("filterbank present for mel kinds");
        let mut energies = power.mul_transposed(fb);
        let eps = self.cfg.log_floor_eps;
        energies
            .data_mut()
            .iter_mut()
            .for_each(|e| *e = (*e + eps).ln());
        energies
    }

    /// Features of a raw sample buffer recorded at this extractor's rate.
    pub fn extract_samples(&self, samples: &[f32]) -> Result<FeatureMatrix> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        let power = self.power(samples);
        let values = match self.cfg.kind {
            FeatureKind::FilterBank | FeatureKind::MelSpec => self.log_mel(&power),
            FeatureKind::Mfcc => {
                let dct = self.dct.as_ref().expect("dct present for mfcc");
                self.log_mel(&power).mul_transposed(dct)
            }
            FeatureKind::Chroma => {
                chroma_from_power(&power, self.cfg.fft_size, self.sample_rate_hz)
            }
        };
        Ok(FeatureMatrix {
            values,
            kind: self.cfg.kind,
            config_digest: self.digest.clone(),
        })
    }

    pub fn extract(&self, segment: &Segment) -> Result<FeatureMatrix> {
        if segment.sample_rate_hz != self.sample_rate_hz {
            return Err(Error::InvalidConfig(format!(
                "segment rate {} Hz, extractor built for {} Hz",
                segment.sample_rate_hz, self.sample_rate_hz
            )));
        }
        self.extract_samples(&segment.samples)
    }

    /// Extracts every segment, optionally on the rayon pool. Output order and
    /// values are identical either way.
    pub fn extract_all(&self, segments: &[Segment], parallel: bool) -> Result<Vec<FeatureMatrix>> {
        if parallel {
            segments.par_iter().map(|s| self.extract(s)).collect()
        } else {
            segments.iter().map(|s| self.extract(s)).collect()
        }
    }
}

fn with_kind(cfg: &FeatureConfig, kind: FeatureKind) -> FeatureConfig {
    FeatureConfig {
        kind,
        ..cfg.clone()
    }
}

/// Power spectrogram `[frames × (fft_size/2 + 1)]` of a segment.
pub fn stft_power(segment: &Segment, cfg: &FeatureConfig) -> Result<Matrix> {
    cfg.validate()?;
    if segment.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Ok(Stft::new(cfg.fft_size, cfg.hop_size).power(&segment.samples))
}

pub fn filterbank_features(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(
        &with_kind(cfg, FeatureKind::FilterBank),
        segment.sample_rate_hz,
    )?
    .extract(segment)
}

pub fn melspec_features(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(
        &with_kind(cfg, FeatureKind::MelSpec),
        segment.sample_rate_hz,
    )?
    .extract(segment)
}

pub fn chroma_features(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(&with_kind(cfg, FeatureKind::Chroma), segment.sample_rate_hz)?
        .extract(segment)
}

pub fn mfcc_features(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(&with_kind(cfg, FeatureKind::Mfcc), segment.sample_rate_hz)?
        .extract(segment)
}

/// Dispatches on `cfg.kind`.
pub fn extract_features(segment: &Segment, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(cfg, segment.sample_rate_hz)?.extract(segment)
}
