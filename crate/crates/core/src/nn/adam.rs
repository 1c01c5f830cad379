use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Adam moments for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> AdamState<F> {
    /// Zeroed moments shaped like `params`, default hyperparameters.
    pub fn new(params: &[&Tensor<F>], lr: f64) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Tensor<F>],
    grads: &[&Tensor<F>],
    state: &mut AdamState<F>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::ShapeMismatch(format!(
                "adam: param {:?} grad {:?} moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64(state.beta1);
    let b2 = F::from_f64(state.beta2);
    let one = F::one();
    let bc1 = F::from_f64(1.0 - state.beta1.powi(t));
    let bc2 = F::from_f64(1.0 - state.beta2.powi(t));
    let lr = F::from_f64(state.lr);
    let eps = F::from_f64(state.eps);

    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
