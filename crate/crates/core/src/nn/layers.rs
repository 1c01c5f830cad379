//! Layer forward/backward passes. Feature maps are `[H, W, C]` row-major.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Gradients of one layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Trainable tensors of a layer plus accumulated gradients of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
    pub grad_weights: Tensor<F>,
    pub grad_bias: Tensor<F>,
}

impl<F: Scalar> LayerParams<F> {
    pub fn new(weights: Tensor<F>, bias: Tensor<F>) -> Self {
        Self {
            grad_weights: Tensor::zeros(weights.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weights,
            bias,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(F::zero());
        self.grad_bias.fill(F::zero());
    }

    pub fn accumulate(&mut self, grads: &ParamGrads<F>) -> Result<()> {
        self.grad_weights.add_assign(&grads.weights)?;
        self.grad_bias.add_assign(&grads.bias)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn hwc(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::ShapeMismatch(format!(
            "{what} expects [H, W, C], got {s:?}"
        ))),
    }
}

/// Stride-1 convolution (cross-correlation) with Same zero padding. Even
/// kernels put the extra padding row/column at the bottom/right.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F> {
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    /// Weights `[kh, kw, Cin, Cout]`, bias `[Cout]`.
    pub params: LayerParams<F>,
}

/// Saved activations for [`Conv2d::backward`].
#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    cols: Vec<F>,
    height: usize,
    width: usize,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(weights: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        let [kh, kw, cin, cout] = *weights.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "conv weights must be [kh, kw, Cin, Cout], got {:?}",
                weights.shape()
            )));
        };
        if bias.shape() != [cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv bias must be [{cout}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            kernel: (kh, kw),
            in_channels: cin,
            out_channels: cout,
            params: LayerParams::new(weights, bias),
        })
    }

    fn patch_len(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels
    }

    fn im2col(&self, input: &[F], h: usize, w: usize) -> Vec<F> {
        let (kh, kw) = self.kernel;
        let cin = self.in_channels;
        let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
        let k = self.patch_len();
        let mut cols = vec![F::zero(); h * w * k];
        for oh in 0..h {
            for ow in 0..w {
                let row = &mut cols[(oh * w + ow) * k..(oh * w + ow + 1) * k];
                for dy in 0..kh {
                    let Some(ih) = (oh + dy).checked_sub(pt).filter(|&i| i < h) else {
                        continue;
                    };
                    for dx in 0..kw {
                        let Some(iw) = (ow + dx).checked_sub(pl).filter(|&i| i < w) else {
                            continue;
                        };
                        let src = (ih * w + iw) * cin;
                        let dst = (dy * kw + dx) * cin;
                        row[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[F], h: usize, w: usize) -> Vec<F> {
        let (kh, kw) = self.kernel;
        let cin = self.in_channels;
        let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
        let k = self.patch_len();
        let mut out = vec![F::zero(); h * w * cin];
        for oh in 0..h {
            for ow in 0..w {
                let row = &dcols[(oh * w + ow) * k..(oh * w + ow + 1) * k];
                for dy in 0..kh {
                    let Some(ih) = (oh + dy).checked_sub(pt).filter(|&i| i < h) else {
                        continue;
                    };
                    for dx in 0..kw {
                        let Some(iw) = (ow + dx).checked_sub(pl).filter(|&i| i < w) else {
                            continue;
                        };
                        let dst = (ih * w + iw) * cin;
                        let src = (dy * kw + dx) * cin;
                        for c in 0..cin {
                            out[dst + c] += row[src + c];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<(Tensor<F>, ConvCache<F>)> {
        let (h, w, c) = hwc(input, "conv2d")?;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv2d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let k = self.patch_len();
        let cout = self.out_channels;
        let cols = self.im2col(input.data(), h, w);
        let mut out = Vec::with_capacity(h * w * cout);
        for _ in 0..h * w {
            out.extend_from_slice(self.params.bias.data());
        }
        F::gemm(
            h * w,
            k,
            cout,
            &cols,
            (k, 1),
            self.params.weights.data(),
            (cout, 1),
            &mut out,
            (cout, 1),
            true,
        );
        let out = Tensor::new(vec![h, w, cout], out)?;
        Ok((
            out,
            ConvCache {
                cols,
                height: h,
                width: w,
            },
        ))
    }

    /// Returns the input gradient (when requested) and the parameter gradients.
    pub fn backward(
        &self,
        cache: &ConvCache<F>,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> Result<(Option<Tensor<F>>, ParamGrads<F>)> {
        let (h, w) = (cache.height, cache.width);
        let cout = self.out_channels;
        if grad_out.shape() != [h, w, cout] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d grad {:?} vs output [{h}, {w}, {cout}]",
                grad_out.shape()
            )));
        }
        let k = self.patch_len();
        let hw = h * w;
        let g = grad_out.data();

        let mut dw = vec![F::zero(); k * cout];
        F::gemm(
            k,
            hw,
            cout,
            &cache.cols,
            (1, k),
            g,
            (cout, 1),
            &mut dw,
            (cout, 1),
            false,
        );
        let mut db = vec![F::zero(); cout];
        for row in g.chunks_exact(cout) {
            for (b, &x) in db.iter_mut().zip(row) {
                *b += x;
            }
        }

        let dinput = if need_input_grad {
            let mut dcols = vec![F::zero(); hw * k];
            F::gemm(
                hw,
                cout,
                k,
                g,
                (cout, 1),
                self.params.weights.data(),
                (1, cout),
                &mut dcols,
                (k, 1),
                false,
            );
            let dx = self.col2im(&dcols, h, w);
            Some(Tensor::new(vec![h, w, self.in_channels], dx)?)
        } else {
            None
        };

        Ok((
            dinput,
            ParamGrads {
                weights: Tensor::new(self.params.weights.shape().to_vec(), dw)?,
                bias: Tensor::new(vec![cout], db)?,
            },
        ))
    }
}

/// Non-overlapping max pooling (stride = pool size). Edge windows are
/// truncated, so the output is `ceil(H/p) × ceil(W/p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub size: usize,
}

/// Flat input index of the maximum of every output cell.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::ShapeMismatch("pool size must be at least 1".into()));
        }
        Ok(Self { size })
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.size), w.div_ceil(self.size))
    }

    pub fn forward<F: Scalar>(&self, input: &Tensor<F>) -> Result<(Tensor<F>, PoolCache)> {
        let (h, w, c) = hwc(input, "maxpool2d")?;
        if self.size == 1 {
            return Ok((
                input.clone(),
                PoolCache {
                    argmax: Vec::new(),
                    input_shape: input.shape().to_vec(),
                },
            ));
        }
        let p = self.size;
        let (oh_n, ow_n) = self.output_dims(h, w);
        let x = input.data();
        let mut out = Vec::with_capacity(oh_n * ow_n * c);
        let mut argmax = Vec::with_capacity(oh_n * ow_n * c);
        for oh in 0..oh_n {
            for ow in 0..ow_n {
                for ch in 0..c {
                    let mut best_idx = (oh * p * w + ow * p) * c + ch;
                    let mut best = x[best_idx];
                    for ih in oh * p..((oh + 1) * p).min(h) {
                        for iw in ow * p..((ow + 1) * p).min(w) {
                            let idx = (ih * w + iw) * c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        Ok((
            Tensor::new(vec![oh_n, ow_n, c], out)?,
            PoolCache {
                argmax,
                input_shape: input.shape().to_vec(),
            },
        ))
    }

    pub fn backward<F: Scalar>(
        &self,
        cache: &PoolCache,
        grad_out: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        if self.size == 1 {
            if grad_out.shape() != cache.input_shape.as_slice() {
                return Err(Error::ShapeMismatch("maxpool identity grad shape".into()));
            }
            return Ok(grad_out.clone());
        }
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::ShapeMismatch(format!(
                "maxpool grad has {} elements, expected {}",
                grad_out.len(),
                cache.argmax.len()
            )));
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        let d = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }
}

pub fn relu<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    let mut out = input.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|x| *x = x.max(F::zero()));
    out
}

/// Passes the gradient where the forward input (equivalently output) was positive.
pub fn relu_backward<F: Scalar>(output: &Tensor<F>, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch("relu grad shape".into()));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

/// Fully connected layer `y = xW + b` on a flattened input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// Weights `[n_in, n_out]`, bias `[n_out]`.
    pub params: LayerParams<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn new(weights: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        let [_, n_out] = *weights.shape() else {
            return Err(Error::ShapeMismatch(
                "dense weights must be [n_in, n_out]".into(),
            ));
        };
        if bias.shape() != [n_out] {
            return Err(Error::ShapeMismatch("dense bias shape".into()));
        }
        Ok(Self {
            params: LayerParams::new(weights, bias),
        })
    }

    pub fn n_in(&self) -> usize {
        self.params.weights.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.params.weights.shape()[1]
    }

    pub fn forward(&self, input: &[F]) -> Result<Tensor<F>> {
        if input.len() != self.n_in() {
            return Err(Error::ShapeMismatch(format!(
                "dense expects {} inputs, got {}",
                self.n_in(),
                input.len()
            )));
        }
        let n_out = self.n_out();
        let mut out = self.params.bias.data().to_vec();
        F::gemm(
            1,
            self.n_in(),
            n_out,
            input,
            (self.n_in(), 1),
            self.params.weights.data(),
            (n_out, 1),
            &mut out,
            (n_out, 1),
            true,
        );
        Tensor::new(vec![n_out], out)
    }

    pub fn backward(&self, input: &[F], grad_out: &[F]) -> Result<(Vec<F>, ParamGrads<F>)> {
        let (n_in, n_out) = (self.n_in(), self.n_out());
        if input.len() != n_in || grad_out.len() != n_out {
            return Err(Error::ShapeMismatch("dense backward shapes".into()));
        }
        let mut dw = Vec::with_capacity(n_in * n_out);
        for &x in input {
            dw.extend(grad_out.iter().map(|&g| x * g));
        }
        let w = self.params.weights.data();
        let dx = (0..n_in)
            .map(|i| {
                w[i * n_out..(i + 1) * n_out]
                    .iter()
                    .zip(grad_out)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect();
        Ok((
            dx,
            ParamGrads {
                weights: Tensor::new(vec![n_in, n_out], dw)?,
                bias: Tensor::new(vec![n_out], grad_out.to_vec())?,
            },
        ))
    }
}

/// Max-subtracted softmax.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Categorical cross-entropy of softmax(logits) against a one-hot target.
/// Returns the loss and the probabilities; the logit gradient is
/// `probs - target`.
pub fn softmax_cross_entropy<F: Scalar>(logits: &[F], target: &[F]) -> Result<(F, Vec<F>)> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(Error::ShapeMismatch("logits and target lengths".into()));
    }
    let hot: Vec<usize> = target
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != F::zero())
        .map(|(i, _)| i)
        .collect();
    if hot.len() != 1 || target[hot[0]] != F::one() {
        return Err(Error::ShapeMismatch("target must be one-hot".into()));
    }
    let class = hot[0];
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<F>().ln() + max;
    Ok((log_sum - logits[class], softmax(logits)))
}

pub fn softmax_cross_entropy_backward<F: Scalar>(probs: &[F], target: &[F]) -> Vec<F> {
    probs.iter().zip(target).map(|(&p, &t)| p - t).collect()
}

pub fn one_hot<F: Scalar>(class: usize, n: usize) -> Vec<F> {
    let mut v = vec![F::zero(); n];
    v[class] = F::one();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn unit_kernel_is_identity() {
        let conv = Conv2d::new(t(&[1, 1, 1, 1], vec![1.0]), t(&[1], vec![0.0])).unwrap();
        let x = t(&[2, 3, 1], vec![1.0, -2.0, 3.0, 4.0, 5.5, -6.0]);
        assert_eq!(conv.forward(&x).unwrap().0, x);
    }

    #[test]
    fn ones_convolution_counts_neighbours() {
        let conv = Conv2d::new(t(&[3, 3, 1, 1], vec![1.0; 9]), t(&[1], vec![0.0])).unwrap();
        let (y, _) = conv.forward(&t(&[3, 3, 1], vec![1.0; 9])).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn even_kernel_pads_bottom_right() {
        // 2x2 ones kernel on a 2x2 ramp: top-left output sees the whole map,
        // bottom-right sees only itself.
        let conv = Conv2d::new(t(&[2, 2, 1, 1], vec![1.0; 4]), t(&[1], vec![0.0])).unwrap();
        let (y, _) = conv
            .forward(&t(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        assert_eq!(y.data(), &[10.0, 6.0, 7.0, 4.0]);
    }

    #[test]
    fn conv_rejects_wrong_channels() {
        let conv = Conv2d::new(t(&[1, 1, 2, 1], vec![1.0, 1.0]), t(&[1], vec![0.0])).unwrap();
        assert!(matches!(
            conv.forward(&t(&[2, 2, 1], vec![0.0; 4])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn pool_ramp() {
        let x = t(&[4, 4, 1], (1..=16).map(f64::from).collect());
        let (y, _) = MaxPool2d::new(2).unwrap().forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn pool_ceil_and_identity() {
        let x = t(&[5, 4, 2], (0..40).map(f64::from).collect());
        let (y, _) = MaxPool2d::new(3).unwrap().forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        assert_eq!(y.data(), &[20.0, 21.0, 22.0, 23.0, 36.0, 37.0, 38.0, 39.0]);
        let (same, cache) = MaxPool2d::new(1).unwrap().forward(&x).unwrap();
        assert_eq!(same, x);
        let g = t(&[5, 4, 2], vec![0.5; 40]);
        assert_eq!(MaxPool2d::new(1).unwrap().backward(&cache, &g).unwrap(), g);
    }

    #[test]
    fn pool_ties_go_to_first_element() {
        let x = t(&[2, 2, 1], vec![1.0; 4]);
        let pool = MaxPool2d::new(2).unwrap();
        let (_, cache) = pool.forward(&x).unwrap();
        let dx = pool.backward(&cache, &t(&[1, 1, 1], vec![1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_basics() {
        let neg = t(&[3], vec![-1.0, -0.5, -3.0]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = t(&[3], vec![0.0, 0.5, 3.0]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn dense_examples() {
        let d = Dense::new(
            t(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
            t(&[2], vec![1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(d.forward(&[1.0, 2.0]).unwrap().data(), &[2.0, 3.0]);
        let id = Dense::new(
            t(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
            t(&[2], vec![0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(id.forward(&[-4.0, 7.0]).unwrap().data(), &[-4.0, 7.0]);
    }

    #[test]
    fn uniform_logits_loss_is_ln4() {
        let (loss, probs) = softmax_cross_entropy(&[0.3f64; 4], &one_hot(2, 4)).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_rejects_non_one_hot() {
        assert!(softmax_cross_entropy(&[0.0f64; 3], &[0.5, 0.5, 0.0]).is_err());
        assert!(softmax_cross_entropy(&[0.0f64; 3], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let (loss, probs) =
            softmax_cross_entropy(&[1000.0f64, -1000.0, 0.0], &one_hot(1, 3)).unwrap();
        assert!((loss - 2000.0).abs() < 1e-9);
        assert!(probs.iter().all(|p| p.is_finite()));
    }
}
