//! The EKM classifier: architecture, training loop, and prediction.

mod model;
mod train;

pub use model::{build_ekm, EkmModel, ForwardCache, ModelConfig};
pub(crate) use train::argmax;
pub use train::{
    evaluate_loss, train, EpochRecord, Example, TrainConfig, TrainHistory, HISTORY_HEADER,
};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::features::{segment_clip, FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::label::{KinitLabel, N_CLASSES};

/// Softmax class probabilities for one feature matrix.
pub fn predict_segment(model: &EkmModel<f32>, fm: &FeatureMatrix) -> Result<Vec<f32>> {
    model.predict_input(&model.prepare_input(fm)?)
}

/// Per-segment probabilities and argmax votes for a whole clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub label: KinitLabel,
    pub votes: Vec<usize>,
    pub probabilities: Vec<Vec<f32>>,
}

/// Majority vote over segment argmaxes. Ties go to the larger summed
/// probability, then to the lower class index.
pub fn aggregate_votes(probabilities: &[Vec<f32>]) -> Result<ClipPrediction> {
    if probabilities.is_empty() {
        return Err(Error::InsufficientData(
            "no segment predictions to aggregate".into(),
        ));
    }
    let votes: Vec<usize> = probabilities.iter().map(|p| train::argmax(p)).collect();
    let mut counts = [0usize; N_CLASSES];
    let mut mass = [0f64; N_CLASSES];
    for (v, p) in votes.iter().zip(probabilities) {
        counts[*v] += 1;
        for (m, &x) in mass.iter_mut().zip(p) {
            *m += x as f64;
        }
    }
    let mut best = 0;
    for c in 1..N_CLASSES {
        if counts[c] > counts[best] || (counts[c] == counts[best] && mass[c] > mass[best]) {
            best = c;
        }
    }
    Ok(ClipPrediction {
        label: KinitLabel::from_index(best).expect("class index"),
        votes,
        probabilities: probabilities.to_vec(),
    })
}

/// Segments a clip, classifies every segment, and votes.
pub fn predict_clip(
    model: &EkmModel<f32>,
    clip: &AudioClip,
    feature_cfg: &FeatureConfig,
) -> Result<ClipPrediction> {
    let extractor = FeatureExtractor::new(feature_cfg, clip.sample_rate_hz)?;
    let probs = segment_clip(clip, feature_cfg)?
        .iter()
        .map(|s| predict_segment(model, &extractor.extract(s)?))
        .collect::<Result<Vec<_>>>()?;
    aggregate_votes(&probs)
}
