//! Kiñit classification pipeline.
//!
//! WAV ingestion ([`audio_io`]), overlapping segmentation and spectral
//! features ([`features`]), corpus scanning and splitting ([`dataset`]), judge
//! agreement ([`annotation`]), a from-scratch CNN engine ([`nn`]), the EKM
//! classifier and its training loop ([`ekm`]), and the experiment harness
//! ([`experiments`]).

pub mod annotation;
pub mod audio_io;
pub mod dataset;
pub mod ekm;
pub mod error;
pub mod experiments;
pub mod features;
pub mod label;
pub mod nn;
pub mod seed;

pub use audio_io::{read_wav, resample_linear, write_wav, AudioClip};
pub use error::{Error, Result};
pub use label::{KinitLabel, N_CLASSES};
