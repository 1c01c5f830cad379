mod common;

use common::*;
use kinit::ekm::{EkmModel, ModelConfig};
use kinit::nn::{one_hot, softmax_cross_entropy};

#[test]
fn every_layer_matches_finite_differences() {
    for (name, err) in gradient_suite() {
        assert!(err < GRAD_TOL, "{name}: max relative error {err:e}");
    }
}

#[test]
fn conv_odd_shapes() {
    for seed in 0..5 {
        assert!(conv_grad_error(100 + seed, [3, 7, 1], (3, 3), 2) < GRAD_TOL);
        assert!(conv_grad_error(200 + seed, [5, 2, 2], (2, 2), 3) < GRAD_TOL);
        assert!(conv_grad_error(300 + seed, [1, 1, 3], (3, 3), 1) < GRAD_TOL);
    }
}

#[test]
fn maxpool_identity_and_ragged_edges() {
    for seed in 0..5 {
        assert!(maxpool_grad_error(seed, [4, 4, 1], 1) < GRAD_TOL);
        assert!(maxpool_grad_error(seed, [5, 8, 3], 3) < GRAD_TOL);
    }
}

/// Full EKM backward pass against central differences on a sample of
/// parameters from every layer.
#[test]
fn whole_model_parameter_gradients() {
    let cfg = ModelConfig {
        zero_init_head: false,
        ..ModelConfig::default()
    };
    let f32_model = EkmModel::<f32>::new(cfg, 7, 4, 9).unwrap();
    let model = f32_model.cast::<f64>();
    let mut g = rng(5);
    let x = random_vec(&mut g, 7 * 4);
    let target = one_hot::<f64>(2, 4);

    let loss_of = |m: &EkmModel<f64>| {
        let (z, _) = m.forward(&x).unwrap();
        softmax_cross_entropy(&z, &target).unwrap().0
    };
    let (z, cache) = model.forward(&x).unwrap();
    let (_, probs) = softmax_cross_entropy(&z, &target).unwrap();
    let gz: Vec<f64> = probs.iter().zip(&target).map(|(p, t)| p - t).collect();
    let grads = model.backward(&cache, &gz).unwrap();
    let flat: Vec<&kinit::nn::Tensor<f64>> = grads
        .iter()
        .flat_map(|pg| [&pg.weights, &pg.bias])
        .collect();

    let n_tensors = model.params().len();
    assert_eq!(flat.len(), n_tensors);
    for p in 0..n_tensors {
        let len = model.params()[p].len();
        let picks: Vec<usize> = (0..6).map(|i| (i * 7919 + p * 31) % len).collect();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &picks {
            let mut up = model.clone();
            up.params_mut()[p].data_mut()[i] += FD_STEP;
            let mut down = model.clone();
            down.params_mut()[p].data_mut()[i] -= FD_STEP;
            numeric.push((loss_of(&up) - loss_of(&down)) / (2.0 * FD_STEP));
            analytic.push(flat[p].data()[i]);
        }
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < GRAD_TOL, "parameter tensor {p}: {err:e}");
    }
}
