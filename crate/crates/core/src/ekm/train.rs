use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{adam_step, one_hot, softmax_cross_entropy, AdamState, ParamGrads, Tensor};
use crate::seed::sub_seed;

use super::model::EkmModel;

/// One standardized model input with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub label: usize,
    pub clip_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Run every batch sequentially. Parallel runs reduce gradients in the same
    /// fixed order, so results match either way; this only removes threads.
    pub deterministic: bool,
    /// Restore the weights of the epoch with the best validation accuracy.
    pub keep_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            deterministic: true,
            keep_best_val: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub seconds_elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_s: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds_elapsed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl TrainHistory {
    /// CSV text. Without `include_timing` the elapsed-time column is left
    /// empty so reruns produce identical bytes.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let secs = if include_timing {
                format!("{:.3}", r.seconds_elapsed)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{},{}\n",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc),
                secs
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>, include_timing: bool) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv(include_timing).as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

struct SampleOutcome {
    loss: f64,
    correct: bool,
    grads: Vec<ParamGrads<f32>>,
}

fn sample_step(model: &EkmModel<f32>, ex: &Example) -> Result<SampleOutcome> {
    let (logits, cache) = model.forward(&ex.input)?;
    let target = one_hot::<f32>(ex.label, logits.len());
    let (loss, probs) = softmax_cross_entropy(&logits, &target)?;
    let grad: Vec<f32> = probs.iter().zip(&target).map(|(p, t)| p - t).collect();
    Ok(SampleOutcome {
        loss: loss as f64,
        correct: argmax(&probs) == ex.label,
        grads: model.backward(&cache, &grad)?,
    })
}

pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy over a set, without updating weights.
pub fn evaluate_loss(model: &EkmModel<f32>, set: &[Example], parallel: bool) -> Result<(f64, f64)> {
    let one = |ex: &Example| -> Result<(f64, bool)> {
        let (logits, _) = model.forward(&ex.input)?;
        let (loss, probs) = softmax_cross_entropy(&logits, &one_hot(ex.label, logits.len()))?;
        Ok((loss as f64, argmax(&probs) == ex.label))
    };
    let results: Vec<(f64, bool)> = if parallel {
        set.par_iter().map(one).collect::<Result<_>>()?
    } else {
        set.iter().map(one).collect::<Result<_>>()?
    };
    let n = results.len().max(1) as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = results.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Mini-batch Adam on categorical cross-entropy for a fixed number of epochs.
/// Training examples are reshuffled every epoch; the last partial batch is
/// kept. Returns the final (or best-validation) weights and the per-epoch
/// history.
pub fn train(
    mut model: EkmModel<f32>,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<(EkmModel<f32>, TrainHistory)> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    let parallel = !cfg.deterministic;
    let mut adam = AdamState::new(&model.params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, EkmModel<f32>)> = None;
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let outcomes: Vec<SampleOutcome> = if parallel {
                batch
                    .par_iter()
                    .map(|&i| sample_step(&model, &train_set[i]))
                    .collect::<Result<_>>()?
            } else {
                batch
                    .iter()
                    .map(|&i| sample_step(&model, &train_set[i]))
                    .collect::<Result<_>>()?
            };

            let mut sum: Vec<Tensor<f32>> = model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            for o in &outcomes {
                loss_sum += o.loss;
                correct += o.correct as usize;
                for (layer, g) in o.grads.iter().enumerate() {
                    sum[2 * layer].add_assign(&g.weights)?;
                    sum[2 * layer + 1].add_assign(&g.bias)?;
                }
            }
            let inv = 1.0 / batch.len() as f32;
            sum.iter_mut().for_each(|t| t.scale(inv));
            let grads: Vec<&Tensor<f32>> = sum.iter().collect();
            adam_step(&mut model.params_mut(), &grads, &mut adam)?;
        }

        let (val_loss, val_acc) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_loss(&model, val_set, parallel)?;
            (Some(l), Some(a))
        };
        let n = train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc,
            seconds_elapsed: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} acc {:.3} val_acc {:?}",
            record.train_loss,
            record.train_acc,
            record.val_acc
        );
        if cfg.keep_best_val {
            if let Some(acc) = val_acc {
                if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                    best = Some((acc, model.clone()));
                }
            }
        }
        history.epochs.push(record);
    }
    history.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some((_, m)) = best {
        model = m;
    }
    Ok((model, history))
}
