use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix, FeatureStats};
use crate::label::N_CLASSES;
use crate::nn::{
    read_checkpoint, relu, relu_backward, seeded_init, softmax, write_checkpoint, Conv2d,
    ConvCache, Dense, MaxPool2d, ParamGrads, PoolCache, Scalar, Tensor,
};
use crate::seed::sub_seed;

/// Layer geometry of the four-stage network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub conv_channels: [usize; 4],
    pub conv_kernels: [(usize, usize); 4],
    pub pool_sizes: [usize; 4],
    pub n_classes: usize,
    /// Start the output layer at zero so every class begins at probability
    /// 1/n. Otherwise it gets the same He-uniform init as the convs.
    pub zero_init_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_channels: [32, 64, 128, 256],
            conv_kernels: [(3, 3), (3, 3), (3, 3), (2, 2)],
            pool_sizes: [3, 1, 1, 1],
            n_classes: N_CLASSES,
            zero_init_head: true,
        }
    }
}

impl ModelConfig {
    /// Spatial size after every conv+pool stage. Same-padded convs keep the
    /// size; pools divide it rounding up.
    pub fn stage_dims(&self, frames: usize, bins: usize) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(4);
        let (mut h, mut w) = (frames, bins);
        for &p in &self.pool_sizes {
            h = h.div_ceil(p);
            w = w.div_ceil(p);
            dims.push((h, w));
        }
        dims
    }

    /// Length of the flattened map entering the dense layer.
    pub fn flatten_len(&self, frames: usize, bins: usize) -> usize {
        let (h, w) = *self.stage_dims(frames, bins).last().unwrap();
        h * w * self.conv_channels[3]
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    convs: Vec<ConvCache<F>>,
    relu_out: Vec<Tensor<F>>,
    pools: Vec<PoolCache>,
    flat: Vec<F>,
}

/// The EKM network: four conv/ReLU/max-pool stages, a dense layer, and
/// softmax. Input is one feature matrix viewed as `[frames, bins, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EkmModel<F> {
    pub config: ModelConfig,
    pub input_frames: usize,
    pub input_bins: usize,
    pub convs: Vec<Conv2d<F>>,
    pub pools: Vec<MaxPool2d>,
    pub dense: Dense<F>,
    /// Per-bin standardization applied to every input, from the training split.
    pub input_stats: Option<FeatureStats>,
}

impl<F: Scalar> EkmModel<F> {
    /// Seeded He-uniform conv weights, zero biases, and a zero or He-uniform
    /// output layer per [`ModelConfig::zero_init_head`].
    pub fn new(config: ModelConfig, frames: usize, bins: usize, seed: u64) -> Result<Self> {
        if frames < 3 || bins < 2 {
            return Err(Error::ShapeTooSmall { frames, bins });
        }
        let mut convs = Vec::with_capacity(4);
        let mut in_ch = 1;
        for (i, (&out_ch, &(kh, kw))) in config
            .conv_channels
            .iter()
            .zip(&config.conv_kernels)
            .enumerate()
        {
            let fan_in = kh * kw * in_ch;
            let w = seeded_init(
                &[kh, kw, in_ch, out_ch],
                fan_in,
                sub_seed(seed, &format!("conv{}", i + 1)),
            );
            convs.push(Conv2d::new(w, Tensor::zeros(&[out_ch]))?);
            in_ch = out_ch;
        }
        let pools = config
            .pool_sizes
            .iter()
            .map(|&p| MaxPool2d::new(p))
            .collect::<Result<Vec<_>>>()?;
        let flat = config.flatten_len(frames, bins);
        let dense_w = if config.zero_init_head {
            Tensor::zeros(&[flat, config.n_classes])
        } else {
            seeded_init(&[flat, config.n_classes], flat, sub_seed(seed, "dense"))
        };
        let dense = Dense::new(dense_w, Tensor::zeros(&[config.n_classes]))?;
        Ok(Self {
            config,
            input_frames: frames,
            input_bins: bins,
            convs,
            pools,
            dense,
            input_stats: None,
        })
    }

    pub fn n_params(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.params.n_params())
            .sum::<usize>()
            + self.dense.params.n_params()
    }

    /// Parameter tensors in a fixed order: conv1 weight, conv1 bias, …, dense
    /// weight, dense bias.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::with_capacity(10);
        for c in &self.convs {
            out.push(&c.params.weights);
            out.push(&c.params.bias);
        }
        out.push(&self.dense.params.weights);
        out.push(&self.dense.params.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::with_capacity(10);
        for c in &mut self.convs {
            out.push(&mut c.params.weights);
            out.push(&mut c.params.bias);
        }
        out.push(&mut self.dense.params.weights);
        out.push(&mut self.dense.params.bias);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(10);
        for i in 1..=self.convs.len() {
            out.push(format!("conv{i}.weight"));
            out.push(format!("conv{i}.bias"));
        }
        out.push("dense.weight".into());
        out.push("dense.bias".into());
        out
    }

    fn check_input(&self, input: &[F]) -> Result<()> {
        let expected = self.input_frames * self.input_bins;
        if input.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "model expects {}x{} = {expected} inputs, got {}",
                self.input_frames,
                self.input_bins,
                input.len()
            )));
        }
        Ok(())
    }

    /// Logits for one already-standardized input.
    pub fn forward(&self, input: &[F]) -> Result<(Vec<F>, ForwardCache<F>)> {
        self.check_input(input)?;
        let mut x = Tensor::new(vec![self.input_frames, self.input_bins, 1], input.to_vec())?;
        let mut cache = ForwardCache {
            convs: Vec::with_capacity(4),
            relu_out: Vec::with_capacity(4),
            pools: Vec::with_capacity(4),
            flat: Vec::new(),
        };
        for (conv, pool) in self.convs.iter().zip(&self.pools) {
            let (z, cc) = conv.forward(&x)?;
            let a = relu(&z);
            let (p, pc) = pool.forward(&a)?;
            cache.convs.push(cc);
            cache.relu_out.push(a);
            cache.pools.push(pc);
            x = p;
        }
        cache.flat = x.into_data();
        let logits = self.dense.forward(&cache.flat)?.into_data();
        Ok((logits, cache))
    }

    /// Parameter gradients (same order as [`Self::params`]) given the logit
    /// gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache<F>,
        grad_logits: &[F],
    ) -> Result<Vec<ParamGrads<F>>> {
        let (dflat, dense_grads) = self.dense.backward(&cache.flat, grad_logits)?;
        let last_shape = self.pool_output_shape(cache, self.convs.len() - 1);
        let mut grad = Tensor::new(last_shape, dflat)?;
        let mut conv_grads = Vec::with_capacity(self.convs.len());
        for i in (0..self.convs.len()).rev() {
            let g = self.pools[i].backward(&cache.pools[i], &grad)?;
            let g = relu_backward(&cache.relu_out[i], &g)?;
            let (dx, pg) = self.convs[i].backward(&cache.convs[i], &g, i > 0)?;
            conv_grads.push(pg);
            if let Some(dx) = dx {
                grad = dx;
            }
        }
        conv_grads.reverse();
        conv_grads.push(dense_grads);
        Ok(conv_grads)
    }

    fn pool_output_shape(&self, cache: &ForwardCache<F>, stage: usize) -> Vec<usize> {
        let s = cache.relu_out[stage].shape();
        let (h, w) = self.pools[stage].output_dims(s[0], s[1]);
        vec![h, w, s[2]]
    }

    /// Standardized model input for a feature matrix.
    pub fn prepare_input(&self, fm: &FeatureMatrix) -> Result<Vec<F>> {
        if fm.n_frames() != self.input_frames || fm.n_bins() != self.input_bins {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix {}x{} does not match model input {}x{}",
                fm.n_frames(),
                fm.n_bins(),
                self.input_frames,
                self.input_bins
            )));
        }
        let mut values = fm.values.clone();
        if let Some(stats) = &self.input_stats {
            if stats.n_bins() != self.input_bins {
                return Err(Error::BinMismatch {
                    expected: self.input_bins,
                    found: stats.n_bins(),
                });
            }
            for r in 0..values.rows() {
                stats.apply_row(values.row_mut(r));
            }
        }
        Ok(values.data().iter().map(|&v| F::from_f64(v)).collect())
    }

    /// Class probabilities for an already-standardized input.
    pub fn predict_input(&self, input: &[F]) -> Result<Vec<F>> {
        Ok(softmax(&self.forward(input)?.0))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.checkpoint_entries())
    }

    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor<F>)> {
        let meta = |v: &[usize]| {
            Tensor::new(
                vec![v.len()],
                v.iter().map(|&x| F::from_f64(x as f64)).collect(),
            )
            .unwrap()
        };
        let mut entries = vec![
            (
                "input.shape".to_string(),
                meta(&[self.input_frames, self.input_bins]),
            ),
            ("arch.pool_sizes".to_string(), meta(&self.config.pool_sizes)),
        ];
        if let Some(stats) = &self.input_stats {
            let vec = |v: &[f64]| {
                Tensor::new(vec![v.len()], v.iter().map(|&x| F::from_f64(x)).collect()).unwrap()
            };
            entries.push(("input.mean".into(), vec(&stats.mean)));
            entries.push(("input.std".into(), vec(&stats.std)));
        }
        for (name, t) in self.param_names().into_iter().zip(self.params()) {
            entries.push((name, t.clone()));
        }
        entries
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let entries: Vec<(String, Tensor<F>)> = read_checkpoint(path)?;
        Self::from_entries(entries).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn from_entries(entries: Vec<(String, Tensor<F>)>) -> Result<Self> {
        let mut map: std::collections::HashMap<String, Tensor<F>> = entries.into_iter().collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::InvalidConfig(format!("checkpoint lacks '{name}'")))
        };
        let ints = |t: Tensor<F>| {
            t.data()
                .iter()
                .map(|x| x.as_f64() as usize)
                .collect::<Vec<_>>()
        };
        let shape = ints(take("input.shape")?);
        let pools = ints(take("arch.pool_sizes")?);
        let [frames, bins] = shape[..] else {
            return Err(Error::InvalidConfig(
                "input.shape must have 2 entries".into(),
            ));
        };
        let pool_sizes: [usize; 4] = pools
            .try_into()
            .map_err(|_| Error::InvalidConfig("arch.pool_sizes must have 4 entries".into()))?;

        let mut convs = Vec::with_capacity(4);
        for i in 1..=4 {
            convs.push(Conv2d::new(
                take(&format!("conv{i}.weight"))?,
                take(&format!("conv{i}.bias"))?,
            )?);
        }
        let dense = Dense::new(take("dense.weight")?, take("dense.bias")?)?;
        let input_stats = match (take("input.mean"), take("input.std")) {
            (Ok(m), Ok(s)) => Some(FeatureStats {
                mean: m.data().iter().map(|x| x.as_f64()).collect(),
                std: s.data().iter().map(|x| x.as_f64()).collect(),
            }),
            _ => None,
        };
        let config = ModelConfig {
            conv_channels: std::array::from_fn(|i| convs[i].out_channels),
            conv_kernels: std::array::from_fn(|i| convs[i].kernel),
            pool_sizes,
            n_classes: dense.n_out(),
            ..ModelConfig::default()
        };
        if dense.n_in() != config.flatten_len(frames, bins) {
            return Err(Error::ShapeMismatch(format!(
                "dense layer has {} inputs, architecture implies {}",
                dense.n_in(),
                config.flatten_len(frames, bins)
            )));
        }
        let pools = pool_sizes
            .iter()
            .map(|&p| MaxPool2d::new(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            input_frames: frames,
            input_bins: bins,
            convs,
            pools,
            dense,
            input_stats,
        })
    }

    pub fn cast<G: Scalar>(&self) -> EkmModel<G> {
        let conv =
            |c: &Conv2d<F>| Conv2d::new(c.params.weights.cast(), c.params.bias.cast()).unwrap();
        EkmModel {
            config: self.config.clone(),
            input_frames: self.input_frames,
            input_bins: self.input_bins,
            convs: self.convs.iter().map(conv).collect(),
            pools: self.pools.clone(),
            dense: Dense::new(
                self.dense.params.weights.cast(),
                self.dense.params.bias.cast(),
            )
            .unwrap(),
            input_stats: self.input_stats.clone(),
        }
    }
}

/// Builds a freshly initialized model whose input shape follows from the
/// feature configuration at `sample_rate_hz`.
pub fn build_ekm(
    model_cfg: &ModelConfig,
    feature_cfg: &FeatureConfig,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<EkmModel<f32>> {
    EkmModel::new(
        model_cfg.clone(),
        feature_cfg.n_frames(sample_rate_hz),
        feature_cfg.n_bins(),
        seed,
    )
}
