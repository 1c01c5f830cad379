//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kinit::annotation::{fleiss_kappa, KappaVariant, RatingsMatrix};
use kinit::features::{
    dct_ii_matrix, mel_filterbank_matrix, mfcc_features, stft_power, FeatureConfig, FeatureKind,
    Segment, Stft,
};
use kinit::nn::{
    relu, relu_backward, softmax_cross_entropy, softmax_cross_entropy_backward, Conv2d, Dense,
    MaxPool2d, Tensor,
};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_TRIALS: usize = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), random_vec(rng, n)).unwrap()
}

/// Largest element-wise relative error between analytic and central-difference
/// gradients. The denominator is floored at 1e-6 so entries that are both
/// essentially zero do not count as failures.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function of a flat parameter vector.
pub fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn weighted_sum(t: &Tensor<f64>, r: &[f64]) -> f64 {
    t.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn conv_with(weights: &[f64], bias: &[f64], wshape: &[usize]) -> Conv2d<f64> {
    Conv2d::new(
        Tensor::new(wshape.to_vec(), weights.to_vec()).unwrap(),
        Tensor::new(vec![bias.len()], bias.to_vec()).unwrap(),
    )
    .unwrap()
}

/// Gradient check of a Same-padded convolution for input, weights, and bias.
pub fn conv_grad_error(
    seed: u64,
    input_shape: [usize; 3],
    kernel: (usize, usize),
    cout: usize,
) -> f64 {
    let mut g = rng(seed);
    let wshape = [kernel.0, kernel.1, input_shape[2], cout];
    let x = random_tensor(&mut g, &input_shape);
    let w = random_vec(&mut g, wshape.iter().product());
    let b = random_vec(&mut g, cout);
    let r = random_vec(&mut g, input_shape[0] * input_shape[1] * cout);

    let conv = conv_with(&w, &b, &wshape);
    let (out, cache) = conv.forward(&x).unwrap();
    let grad_out = Tensor::new(out.shape().to_vec(), r.clone()).unwrap();
    let (dx, pg) = conv.backward(&cache, &grad_out, true).unwrap();

    let nx = numeric_grad(x.data(), |xs| {
        let t = Tensor::new(input_shape.to_vec(), xs.to_vec()).unwrap();
        weighted_sum(&conv.forward(&t).unwrap().0, &r)
    });
    let nw = numeric_grad(&w, |ws| {
        weighted_sum(&conv_with(ws, &b, &wshape).forward(&x).unwrap().0, &r)
    });
    let nb = numeric_grad(&b, |bs| {
        weighted_sum(&conv_with(&w, bs, &wshape).forward(&x).unwrap().0, &r)
    });
    max_rel_error(dx.unwrap().data(), &nx)
        .max(max_rel_error(pg.weights.data(), &nw))
        .max(max_rel_error(pg.bias.data(), &nb))
}

/// Inputs whose pooling windows have a unique maximum by a clear margin, so
/// the function is smooth within the finite-difference step.
fn separated_values(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        let j = g.gen_range(0..=i);
        v.swap(i, j);
    }
    v.iter().map(|x| x + g.gen_range(0.0..0.001)).collect()
}

pub fn maxpool_grad_error(seed: u64, shape: [usize; 3], size: usize) -> f64 {
    let mut g = rng(seed);
    let pool = MaxPool2d::new(size).unwrap();
    let x = Tensor::new(
        shape.to_vec(),
        separated_values(&mut g, shape.iter().product()),
    )
    .unwrap();
    let (out, cache) = pool.forward(&x).unwrap();
    let r = random_vec(&mut g, out.len());
    let dx = pool
        .backward(
            &cache,
            &Tensor::new(out.shape().to_vec(), r.clone()).unwrap(),
        )
        .unwrap();
    let nx = numeric_grad(x.data(), |xs| {
        let t = Tensor::new(shape.to_vec(), xs.to_vec()).unwrap();
        weighted_sum(&pool.forward(&t).unwrap().0, &r)
    });
    max_rel_error(dx.data(), &nx)
}

fn dense_with(w: &[f64], b: &[f64], n_in: usize) -> Dense<f64> {
    Dense::new(
        Tensor::new(vec![n_in, b.len()], w.to_vec()).unwrap(),
        Tensor::new(vec![b.len()], b.to_vec()).unwrap(),
    )
    .unwrap()
}

pub fn dense_grad_error(seed: u64, n_in: usize, n_out: usize) -> f64 {
    let mut g = rng(seed);
    let x = random_vec(&mut g, n_in);
    let w = random_vec(&mut g, n_in * n_out);
    let b = random_vec(&mut g, n_out);
    let r = random_vec(&mut g, n_out);
    let dense = dense_with(&w, &b, n_in);
    let (dx, pg) = dense.backward(&x, &r).unwrap();
    let nx = numeric_grad(&x, |xs| weighted_sum(&dense.forward(xs).unwrap(), &r));
    let nw = numeric_grad(&w, |ws| {
        weighted_sum(&dense_with(ws, &b, n_in).forward(&x).unwrap(), &r)
    });
    let nb = numeric_grad(&b, |bs| {
        weighted_sum(&dense_with(&w, bs, n_in).forward(&x).unwrap(), &r)
    });
    max_rel_error(&dx, &nx)
        .max(max_rel_error(pg.weights.data(), &nw))
        .max(max_rel_error(pg.bias.data(), &nb))
}

pub fn softmax_ce_grad_error(seed: u64, n: usize) -> f64 {
    let mut g = rng(seed);
    let z: Vec<f64> = random_vec(&mut g, n).iter().map(|v| 3.0 * v).collect();
    let target = kinit::nn::one_hot::<f64>(g.gen_range(0..n), n);
    let (_, probs) = softmax_cross_entropy(&z, &target).unwrap();
    let analytic = softmax_cross_entropy_backward(&probs, &target);
    let numeric = numeric_grad(&z, |zs| softmax_cross_entropy(zs, &target).unwrap().0);
    max_rel_error(&analytic, &numeric)
}

/// conv 3×3 → ReLU → maxpool 3 → dense → softmax-CE, differentiated with
/// respect to the input and the conv weights.
pub fn composite_grad_error(seed: u64) -> f64 {
    let shape = [6usize, 5, 2];
    let wshape = [3usize, 3, 2, 3];
    let mut g = rng(seed);
    let mut attempt = 0u64;
    // Redraw until no pre-activation sits within the step of the ReLU kink.
    let (x, w, b) = loop {
        let mut gg = rng(seed ^ (attempt << 32));
        let x = random_tensor(&mut gg, &shape);
        let w = random_vec(&mut gg, wshape.iter().product());
        let b = random_vec(&mut gg, 3);
        let pre = conv_with(&w, &b, &wshape).forward(&x).unwrap().0;
        if pre.data().iter().all(|v| v.abs() > 1e-3) {
            break (x, w, b);
        }
        attempt += 1;
    };
    let pool = MaxPool2d::new(3).unwrap();
    let flat = 2 * 2 * 3;
    let dw = random_vec(&mut g, flat * 4);
    let db = random_vec(&mut g, 4);
    let dense = dense_with(&dw, &db, flat);
    let target = kinit::nn::one_hot::<f64>(g.gen_range(0..4), 4);

    let loss = |x: &Tensor<f64>, conv: &Conv2d<f64>| -> f64 {
        let a = relu(&conv.forward(x).unwrap().0);
        let p = pool.forward(&a).unwrap().0;
        let z = dense.forward(p.data()).unwrap();
        softmax_cross_entropy(z.data(), &target).unwrap().0
    };

    let conv = conv_with(&w, &b, &wshape);
    let (pre, ccache) = conv.forward(&x).unwrap();
    let act = relu(&pre);
    let (pooled, pcache) = pool.forward(&act).unwrap();
    let z = dense.forward(pooled.data()).unwrap();
    let (_, probs) = softmax_cross_entropy(z.data(), &target).unwrap();
    let gz = softmax_cross_entropy_backward(&probs, &target);
    let (gp, _) = dense.backward(pooled.data(), &gz).unwrap();
    let ga = pool
        .backward(&pcache, &Tensor::new(pooled.shape().to_vec(), gp).unwrap())
        .unwrap();
    let gpre = relu_backward(&act, &ga).unwrap();
    let (gx, pg) = conv.backward(&ccache, &gpre, true).unwrap();

    let nx = numeric_grad(x.data(), |xs| {
        loss(&Tensor::new(shape.to_vec(), xs.to_vec()).unwrap(), &conv)
    });
    let nw = numeric_grad(&w, |ws| loss(&x, &conv_with(ws, &b, &wshape)));
    max_rel_error(gx.unwrap().data(), &nx).max(max_rel_error(pg.weights.data(), &nw))
}

/// Worst error per layer family over `GRAD_TRIALS` random draws.
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    let worst = |f: &dyn Fn(u64) -> f64| {
        (0..GRAD_TRIALS as u64)
            .map(|s| f(s + 1))
            .fold(0.0, f64::max)
    };
    vec![
        (
            "conv3x3",
            worst(&|s| conv_grad_error(s, [5, 4, 2], (3, 3), 3)),
        ),
        (
            "conv2x2",
            worst(&|s| conv_grad_error(s, [4, 5, 3], (2, 2), 2)),
        ),
        (
            "maxpool3x3",
            worst(&|s| maxpool_grad_error(s, [7, 5, 2], 3)),
        ),
        ("dense", worst(&|s| dense_grad_error(s, 6, 4))),
        ("relu_composite", worst(&|s| composite_grad_error(s))),
        ("softmax_ce", worst(&|s| softmax_ce_grad_error(s, 4))),
    ]
}

/// Windowed frame built without the library's framing code: centered at
/// `t·hop`, numpy-style reflection at the edges, periodic Hann.
pub fn reference_frame(signal: &[f32], t: usize, fft: usize, hop: usize) -> Vec<f64> {
    let n = signal.len() as isize;
    (0..fft)
        .map(|i| {
            let mut idx = (t * hop) as isize - (fft / 2) as isize + i as isize;
            while idx < 0 || idx >= n {
                idx = if idx < 0 { -idx } else { 2 * (n - 1) - idx };
            }
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / fft as f64).cos();
            signal[idx as usize] as f64 * w
        })
        .collect()
}

/// `|X[k]|²` by direct summation.
pub fn naive_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Max over 50 random frames of max|fft − dft| / max|dft|.
pub fn fft_vs_dft_deviation() -> f64 {
    let (fft, hop) = (2048, 512);
    let stft = Stft::new(fft, hop);
    let mut g = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let len = g.gen_range(3000..9000);
        let signal: Vec<f32> = (0..len).map(|_| g.gen_range(-1.0f32..1.0)).collect();
        let power = stft.power(&signal);
        let t = g.gen_range(0..power.rows());
        let reference = naive_power(&reference_frame(&signal, t, fft, hop));
        let scale = reference.iter().cloned().fold(0.0, f64::max);
        let dev = power
            .row(t)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev / scale);
    }
    worst
}

/// ‖D·Dᵀ − I‖_max of the n×n DCT-II matrix.
pub fn dct_orthonormality_error(n: usize) -> f64 {
    let d = dct_ii_matrix(n, n);
    let p = d.mul_transposed(&d);
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { 1.0 } else { 0.0 };
            err = err.max((p.get(i, j) - expected).abs());
        }
    }
    err
}

/// Library MFCCs against an explicit power → filterbank → log → DCT chain.
pub fn mfcc_composition_error() -> f64 {
    let mut g = rng(11);
    let signal: Vec<f32> = (0..48000).map(|_| g.gen_range(-0.5f32..0.5)).collect();
    let seg = Segment::from_samples(signal, 16000);
    let cfg = FeatureConfig::new(FeatureKind::Mfcc, 3.0);
    let mfcc = mfcc_features(&seg, &cfg).unwrap();
    let power = stft_power(&seg, &cfg).unwrap();
    let fb = mel_filterbank_matrix(40, 2048, 16000).unwrap();
    let dct = dct_ii_matrix(13, 40);
    let mut err: f64 = 0.0;
    for t in 0..power.rows() {
        let logs: Vec<f64> = (0..40)
            .map(|m| {
                let e: f64 = power.row(t).iter().zip(fb.row(m)).map(|(p, w)| p * w).sum();
                (e + 1e-10).ln()
            })
            .collect();
        for c in 0..13 {
            let v: f64 = dct.row(c).iter().zip(&logs).map(|(a, b)| a * b).sum();
            err = err.max((v - mfcc.values.get(t, c)).abs());
        }
    }
    err
}

/// Random `items × k` count matrix with `raters` votes per row.
pub fn random_ratings(
    g: &mut ChaCha8Rng,
    items: usize,
    k: usize,
    raters: usize,
) -> Vec<Vec<usize>> {
    (0..items)
        .map(|_| {
            let mut row = vec![0; k];
            for _ in 0..raters {
                row[g.gen_range(0..k)] += 1;
            }
            row
        })
        .collect()
}

/// Kappa under row permutation, column permutation, and item duplication, over
/// `n` random matrices. Returns the largest deviation and the number of
/// degenerate draws skipped.
pub fn kappa_invariance_deviation(n: usize) -> (f64, usize) {
    let mut g = rng(3);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..n {
        let items = g.gen_range(2..15);
        let k = g.gen_range(2..6);
        let raters = g.gen_range(2..8);
        let rows = random_ratings(&mut g, items, k, raters);
        let kappa = |r: Vec<Vec<usize>>, v| {
            fleiss_kappa(&RatingsMatrix::new(r, raters).unwrap(), v).map(|a| a.kappa)
        };
        for v in [KappaVariant::Fleiss, KappaVariant::FreeMarginal] {
            let Ok(base) = kappa(rows.clone(), v) else {
                skipped += 1;
                continue;
            };
            let mut shuffled_rows = rows.clone();
            shuffled_rows.reverse();
            shuffled_rows.rotate_left(items / 2);
            let perm: Vec<usize> = (0..k).rev().collect();
            let permuted_cols: Vec<Vec<usize>> = rows
                .iter()
                .map(|r| perm.iter().map(|&j| r[j]).collect())
                .collect();
            let doubled: Vec<Vec<usize>> = rows.iter().chain(rows.iter()).cloned().collect();
            for other in [shuffled_rows, permuted_cols, doubled] {
                worst = worst.max((kappa(other, v).unwrap() - base).abs());
            }
        }
    }
    (worst, skipped)
}
