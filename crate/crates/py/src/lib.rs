//! Python bindings for the `kinit` crate. Audio is passed as lists of floats
//! and feature matrices as lists of rows.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kinit::annotation::{self, KappaVariant, RatingsMatrix};
use kinit::dataset::{self, Manifest, SplitFractions, SynthSpec};
use kinit::ekm::{self as ekm_mod, ModelConfig};
use kinit::experiments::RunSeeds;
use kinit::features::{self, FeatureConfig, FeatureExtractor, FeatureKind, FeatureMatrix, Matrix};
use kinit::seed::sub_seed;

fn to_py(e: kinit::Error) -> PyErr {
    match e {
        kinit::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "AudioClip", module = "kinit", skip_from_py_object)]
#[derive(Clone)]
pub struct PyAudioClip {
    inner: kinit::AudioClip,
}

#[pymethods]
impl PyAudioClip {
    #[new]
    #[pyo3(signature = (samples, sample_rate_hz, source_id = String::new(), label = None))]
    fn new(
        samples: Vec<f32>,
        sample_rate_hz: u32,
        source_id: String,
        label: Option<&str>,
    ) -> PyResult<Self> {
        let label = label.map(parse).transpose()?;
        Ok(Self {
            inner: kinit::AudioClip::new(samples, sample_rate_hz, source_id).with_label(label),
        })
    }

    #[getter]
    fn samples(&self) -> Vec<f32> {
        self.inner.samples.clone()
    }

    #[getter]
    fn sample_rate_hz(&self) -> u32 {
        self.inner.sample_rate_hz
    }

    #[getter]
    fn source_id(&self) -> String {
        self.inner.source_id.clone()
    }

    #[getter]
    fn label(&self) -> Option<String> {
        self.inner.label.map(|l| l.name().to_string())
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }

    fn resample(&self, target_hz: u32) -> PyResult<Self> {
        if target_hz == 0 {
            return Err(PyValueError::new_err("target rate must be positive"));
        }
        Ok(Self {
            inner: kinit::resample_linear(&self.inner, target_hz),
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        kinit::write_wav(&self.inner, path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioClip(source_id={:?}, samples={}, sample_rate_hz={}, label={:?})",
            self.inner.source_id,
            self.inner.samples.len(),
            self.inner.sample_rate_hz,
            self.label()
        )
    }
}

#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<PyAudioClip> {
    Ok(PyAudioClip {
        inner: kinit::read_wav(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn write_wav(path: PathBuf, clip: &PyAudioClip) -> PyResult<()> {
    kinit::write_wav(&clip.inner, path).map_err(to_py)
}

/// One synthetic 30 s clip of the given class (0..3).
#[pyfunction]
#[pyo3(signature = (class_index, seed = 42, clip_seed = 0))]
fn synth_clip(class_index: usize, seed: u64, clip_seed: u64) -> PyResult<PyAudioClip> {
    let spec = SynthSpec {
        seed: sub_seed(seed, "synth"),
        ..SynthSpec::default()
    };
    Ok(PyAudioClip {
        inner: dataset::synth_clip(class_index, &spec, clip_seed).map_err(to_py)?,
    })
}

/// Writes `per_class` clips per class and `manifest.csv` into `out_dir`.
/// Returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, per_class = 25, seed = 42))]
fn make_synth_corpus(out_dir: PathBuf, per_class: usize, seed: u64) -> PyResult<PathBuf> {
    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let spec = SynthSpec {
        seed: sub_seed(seed, "synth"),
        ..SynthSpec::default()
    };
    let manifest = dataset::make_synth_corpus(&spec, per_class, &out_dir).map_err(to_py)?;
    let path = out_dir.join("manifest.csv");
    manifest.write_csv(&path).map_err(to_py)?;
    Ok(path)
}

/// Clip id to split name for a seeded 70/10/20 stratified split.
#[pyfunction]
#[pyo3(signature = (manifest_path, seed = 42))]
fn split_manifest(manifest_path: PathBuf, seed: u64) -> PyResult<Vec<(String, String)>> {
    let manifest = Manifest::read_csv(manifest_path).map_err(to_py)?;
    let spec = dataset::split(
        &manifest,
        SplitFractions::default(),
        RunSeeds::from_seed(seed).split,
    )
    .map_err(to_py)?;
    Ok(spec
        .assignment
        .into_iter()
        .map(|(id, tag)| (id, tag.name().to_string()))
        .collect())
}

#[pyfunction]
fn segment_count(clip_len: usize, segment_len: usize, step: usize) -> usize {
    features::segment_count(clip_len, segment_len, step)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// Feature matrices (frames × bins) for every segment of a clip.
#[pyfunction]
#[pyo3(signature = (clip, kind = "mfcc", segment_seconds = 3.0))]
fn extract_features(
    clip: &PyAudioClip,
    kind: &str,
    segment_seconds: f64,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let cfg = FeatureConfig::new(parse::<FeatureKind>(kind)?, segment_seconds);
    cfg.validate().map_err(to_py)?;
    let extractor = FeatureExtractor::new(&cfg, clip.inner.sample_rate_hz).map_err(to_py)?;
    let segments = features::segment_clip(&clip.inner, &cfg).map_err(to_py)?;
    segments
        .iter()
        .map(|s| extractor.extract(s).map(|fm| rows(&fm.values)))
        .collect::<kinit::Result<_>>()
        .map_err(to_py)
}

/// `(p_bar_0, p_bar_e, kappa)` for per-item category counts.
#[pyfunction]
#[pyo3(signature = (counts, raters_per_item, variant = "fleiss"))]
fn fleiss_kappa(
    counts: Vec<Vec<usize>>,
    raters_per_item: usize,
    variant: &str,
) -> PyResult<(f64, f64, f64)> {
    let m = RatingsMatrix::new(counts, raters_per_item).map_err(to_py)?;
    let r = annotation::fleiss_kappa(&m, parse::<KappaVariant>(variant)?).map_err(to_py)?;
    Ok((r.p_bar_0, r.p_bar_e, r.kappa))
}

/// Accepted label for five judges' vote counts, or None.
#[pyfunction]
#[pyo3(signature = (votes, threshold = annotation::MAJORITY_THRESHOLD))]
fn majority_label(votes: Vec<usize>, threshold: usize) -> PyResult<Option<String>> {
    Ok(annotation::majority_label(&votes, threshold)
        .map_err(to_py)?
        .map(|l| l.name().to_string()))
}

#[pyclass(name = "EkmModel", module = "kinit")]
pub struct PyEkmModel {
    inner: ekm_mod::EkmModel<f32>,
}

fn feature_matrix(rows: Vec<Vec<f64>>, kind: FeatureKind) -> PyResult<FeatureMatrix> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(PyValueError::new_err("feature rows have different lengths"));
    }
    let values = Matrix::from_vec(n_rows, n_cols, rows.concat());
    Ok(FeatureMatrix {
        values,
        kind,
        config_digest: String::new(),
    })
}

#[pymethods]
impl PyEkmModel {
    /// Freshly initialized model for `frames × bins` inputs.
    #[new]
    #[pyo3(signature = (frames, bins, seed = 42))]
    fn new(frames: usize, bins: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ekm_mod::EkmModel::new(
                ModelConfig::default(),
                frames,
                bins,
                RunSeeds::from_seed(seed).init,
            )
            .map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ekm_mod::EkmModel::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize) {
        (self.inner.input_frames, self.inner.input_bins)
    }

    #[getter]
    fn flatten_len(&self) -> usize {
        self.inner
            .config
            .flatten_len(self.inner.input_frames, self.inner.input_bins)
    }

    /// Class probabilities for one unstandardized feature matrix.
    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f32>> {
        let fm = feature_matrix(features, FeatureKind::Mfcc)?;
        ekm_mod::predict_segment(&self.inner, &fm).map_err(to_py)
    }

    /// Majority-vote label and per-segment votes for a whole clip.
    #[pyo3(signature = (clip, kind = "mfcc", segment_seconds = 3.0))]
    fn predict_clip(
        &self,
        clip: &PyAudioClip,
        kind: &str,
        segment_seconds: f64,
    ) -> PyResult<(String, Vec<usize>)> {
        let cfg = FeatureConfig::new(parse::<FeatureKind>(kind)?, segment_seconds);
        let p = ekm_mod::predict_clip(&self.inner, &clip.inner, &cfg).map_err(to_py)?;
        Ok((p.label.name().to_string(), p.votes))
    }

    fn __repr__(&self) -> String {
        format!(
            "EkmModel(input={}x{}, params={})",
            self.inner.input_frames,
            self.inner.input_bins,
            self.inner.n_params()
        )
    }
}

#[pymodule]
#[pyo3(name = "kinit")]
fn kinit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PyEkmModel>()?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(synth_clip, m)?)?;
    m.add_function(wrap_pyfunction!(make_synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(split_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(segment_count, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(majority_label, m)?)?;
    m.add("CLASSES", kinit::KinitLabel::ALL.map(|l| l.name()).to_vec())?;
    Ok(())
}
