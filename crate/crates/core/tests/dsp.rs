mod common;

use std::f64::consts::PI;

use common::*;
use kinit::features::{
    bin_pitch_class, chroma_features, dct_ii_matrix, filterbank_features, hz_to_mel, mel_edges_hz,
    melspec_features, mfcc_features, stft_power, FeatureConfig, FeatureKind, Segment,
};
use rand::Rng;

const RATE: u32 = 16000;

fn sine(freq: f64, seconds: f64, amp: f64) -> Segment {
    let n = (seconds * RATE as f64) as usize;
    let s = (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / RATE as f64).sin()) as f32)
        .collect();
    Segment::from_samples(s, RATE)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |b, (i, &x)| if x > b.1 { (i, x) } else { b },
        )
        .0
}

fn column_means(m: &kinit::features::Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / m.rows() as f64)
        .collect()
}

#[test]
fn fft_matches_direct_dft() {
    let dev = fft_vs_dft_deviation();
    assert!(dev < 1e-6, "normalized deviation {dev:e}");
}

#[test]
fn dct_is_orthonormal() {
    for n in [12, 40, 128] {
        let err = dct_orthonormality_error(n);
        assert!(err < 1e-9, "n={n}: {err:e}");
    }
}

#[test]
fn dct_entries_match_closed_form() {
    let (k_out, n) = (13, 40);
    let d = dct_ii_matrix(k_out, n);
    for k in 0..k_out {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            let expected = scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
            assert!((d.get(k, i) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn mfcc_is_dct_of_log_filterbank() {
    let err = mfcc_composition_error();
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn sine_at_bin_center_peaks_in_that_bin() {
    let cfg = FeatureConfig::default();
    for k0 in [16usize, 128, 300, 777] {
        let f = k0 as f64 * RATE as f64 / 2048.0;
        let p = stft_power(&sine(f, 1.0, 0.5), &cfg).unwrap();
        for t in 2..p.rows() - 2 {
            assert_eq!(argmax(p.row(t)), k0, "bin {k0}, frame {t}");
        }
    }
}

#[test]
fn one_khz_lands_in_nearest_mel_band() {
    let cfg = FeatureConfig::new(FeatureKind::FilterBank, 1.0);
    let fb = filterbank_features(&sine(1000.0, 1.0, 0.5), &cfg).unwrap();
    // Centers from the HTK mel formula, computed independently.
    let top = 2595.0 * (1.0 + 8000.0 / 700.0f64).log10();
    let centers: Vec<f64> = (1..=40)
        .map(|i| 700.0 * (10f64.powf(top * i as f64 / 41.0 / 2595.0) - 1.0))
        .collect();
    let expected = argmax(
        &centers
            .iter()
            .map(|c| -(c - 1000.0).abs())
            .collect::<Vec<_>>(),
    );
    assert_eq!(argmax(&column_means(&fb.values)), expected);
    let edges = mel_edges_hz(40, RATE);
    assert!((edges[expected + 1] - centers[expected]).abs() < 1e-6);
    assert!((hz_to_mel(1000.0) - 2595.0 * (1.0 + 1000.0 / 700.0f64).log10()).abs() < 1e-9);
}

#[test]
fn doubling_amplitude_adds_log_four() {
    let cfg = FeatureConfig::new(FeatureKind::FilterBank, 1.0);
    let mut g = rng(2);
    let base: Vec<f32> = (0..16000).map(|_| g.gen_range(-0.2f32..0.2)).collect();
    let twice: Vec<f32> = base.iter().map(|x| 2.0 * x).collect();
    let a = filterbank_features(&Segment::from_samples(base, RATE), &cfg).unwrap();
    let b = filterbank_features(&Segment::from_samples(twice, RATE), &cfg).unwrap();
    for (x, y) in a.values.data().iter().zip(b.values.data()) {
        if *x > -10.0 {
            assert!((y - x - 4f64.ln()).abs() < 1e-6, "{x} -> {y}");
        }
    }
}

#[test]
fn white_noise_fills_every_mel_band() {
    let cfg = FeatureConfig::new(FeatureKind::MelSpec, 1.0);
    let mut g = rng(4);
    let noise: Vec<f32> = (0..16000).map(|_| g.gen_range(-0.5f32..0.5)).collect();
    let m = melspec_features(&Segment::from_samples(noise, RATE), &cfg).unwrap();
    assert_eq!(m.n_bins(), 128);
    let floor = 1e-10f64.ln();
    assert!(m.values.data().iter().all(|&v| v > floor + 5.0));
}

#[test]
fn chroma_names_a_and_ignores_octave() {
    let cfg = FeatureConfig::new(FeatureKind::Chroma, 1.0);
    let classes: Vec<usize> = [110.0, 220.0, 440.0]
        .iter()
        .map(|&f| {
            argmax(&column_means(
                &chroma_features(&sine(f, 1.0, 0.5), &cfg).unwrap().values,
            ))
        })
        .collect();
    assert_eq!(classes, vec![9, 9, 9]);
    let c = chroma_features(&sine(261.63, 1.0, 0.5), &cfg).unwrap();
    assert_eq!(argmax(&column_means(&c.values)), 0);
    for row in c.values.iter_rows() {
        let max = row.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
    }
    assert_eq!(bin_pitch_class(0, 2048, RATE), None);
}

#[test]
fn feature_shapes() {
    let seg = sine(300.0, 3.0, 0.3);
    for (kind, bins) in [
        (FeatureKind::FilterBank, 40),
        (FeatureKind::MelSpec, 128),
        (FeatureKind::Chroma, 12),
        (FeatureKind::Mfcc, 13),
    ] {
        let fm = kinit::features::extract_features(&seg, &FeatureConfig::new(kind, 3.0)).unwrap();
        assert_eq!((fm.n_frames(), fm.n_bins()), (94, bins), "{kind}");
    }
    let one = mfcc_features(
        &sine(300.0, 1.0, 0.3),
        &FeatureConfig::new(FeatureKind::Mfcc, 1.0),
    )
    .unwrap();
    assert_eq!(one.n_frames(), 32);
    let five = mfcc_features(
        &sine(300.0, 5.0, 0.3),
        &FeatureConfig::new(FeatureKind::Mfcc, 5.0),
    )
    .unwrap();
    assert_eq!(five.n_frames(), 157);
}
