use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The four feature families compared in the feature experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    FilterBank,
    MelSpec,
    Chroma,
    Mfcc,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::FilterBank,
        FeatureKind::MelSpec,
        FeatureKind::Chroma,
        FeatureKind::Mfcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::FilterBank => "filterbank",
            FeatureKind::MelSpec => "melspec",
            FeatureKind::Chroma => "chroma",
            FeatureKind::Mfcc => "mfcc",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FeatureKind::FilterBank => 0,
            FeatureKind::MelSpec => 1,
            FeatureKind::Chroma => 2,
            FeatureKind::Mfcc => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == lower)
            .ok_or_else(|| format!("unknown feature kind '{s}' (filterbank|melspec|chroma|mfcc)"))
    }
}

/// Extraction parameters. Defaults follow the common librosa STFT settings
/// and the band counts used in the feature comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub fft_size: usize,
    pub hop_size: usize,
    pub n_filterbank: usize,
    pub n_melspec: usize,
    pub n_chroma: usize,
    pub n_mfcc_bands: usize,
    pub n_mfcc_coeffs: usize,
    pub segment_seconds: f64,
    pub overlap_fraction: f64,
    pub log_floor_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Mfcc,
            fft_size: 2048,
            hop_size: 512,
            n_filterbank: 40,
            n_melspec: 128,
            n_chroma: 12,
            n_mfcc_bands: 40,
            n_mfcc_coeffs: 13,
            segment_seconds: 3.0,
            overlap_fraction: 0.5,
            log_floor_eps: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn new(kind: FeatureKind, segment_seconds: f64) -> Self {
        Self {
            kind,
            segment_seconds,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return bad("fft_size must be a power of two");
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return bad("hop_size must be in 1..=fft_size");
        }
        if [
            self.n_filterbank,
            self.n_melspec,
            self.n_chroma,
            self.n_mfcc_bands,
            self.n_mfcc_coeffs,
        ]
        .contains(&0)
        {
            return bad("all band counts must be positive");
        }
        if self.n_chroma != 12 {
            return bad("chroma uses exactly 12 pitch classes");
        }
        if self.n_mfcc_coeffs > self.n_mfcc_bands {
            return bad("n_mfcc_coeffs must not exceed n_mfcc_bands");
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad("overlap_fraction must be in [0, 1)");
        }
        if !(self.segment_seconds > 0.0 && self.segment_seconds.is_finite()) {
            return bad("segment_seconds must be positive");
        }
        if !(self.log_floor_eps > 0.0) {
            return bad("log_floor_eps must be positive");
        }
        Ok(())
    }

    /// Number of columns produced for the configured kind.
    pub fn n_bins(&self) -> usize {
        match self.kind {
            FeatureKind::FilterBank => self.n_filterbank,
            FeatureKind::MelSpec => self.n_melspec,
            FeatureKind::Chroma => self.n_chroma,
            FeatureKind::Mfcc => self.n_mfcc_coeffs,
        }
    }

    pub fn segment_len(&self, sample_rate_hz: u32) -> usize {
        (self.segment_seconds * sample_rate_hz as f64).round() as usize
    }

    pub fn segment_step(&self, sample_rate_hz: u32) -> usize {
        let len = self.segment_len(sample_rate_hz) as f64;
        ((len * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }

    /// STFT frames per segment: `1 + floor(len / hop)`.
    pub fn n_frames(&self, sample_rate_hz: u32) -> usize {
        1 + self.segment_len(sample_rate_hz) / self.hop_size
    }

    /// SHA-256 over every parameter that affects the feature values.
    pub fn digest(&self, sample_rate_hz: u32) -> [u8; 32] {
        let canonical = format!(
            "kind={};rate={};fft={};hop={};fb={};mel={};chroma={};mfcc_bands={};mfcc_coeffs={};seg={:?};overlap={:?};eps={:?};window=hann-periodic;pad=reflect;mel=htk",
            self.kind.name(),
            sample_rate_hz,
            self.fft_size,
            self.hop_size,
            self.n_filterbank,
            self.n_melspec,
            self.n_chroma,
            self.n_mfcc_bands,
            self.n_mfcc_coeffs,
            self.segment_seconds,
            self.overlap_fraction,
            self.log_floor_eps,
        );
        Sha256::digest(canonical.as_bytes()).into()
    }
}
