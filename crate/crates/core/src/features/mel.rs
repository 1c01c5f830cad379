use crate::error::{Error, Result};

use super::Matrix;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// The `n_mels + 2` filter edges in Hz, equally spaced in mel from 0 to Nyquist.
pub fn mel_edges_hz(n_mels: usize, sample_rate_hz: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate_hz as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filters on the HTK mel scale, one row per filter, evaluated at
/// FFT bin center frequencies `k * rate / fft_size`.
pub fn mel_filterbank_matrix(
    n_mels: usize,
    fft_size: usize,
    sample_rate_hz: u32,
) -> Result<Matrix> {
    if n_mels == 0 {
        return Err(Error::InvalidConfig("n_mels must be at least 1".into()));
    }
    let n_bins = fft_size / 2 + 1;
    let bin_hz = sample_rate_hz as f64 / fft_size as f64;
    let edges = mel_edges_hz(n_mels, sample_rate_hz);

    let edge_bins: Vec<i64> = edges.iter().map(|e| (e / bin_hz).round() as i64).collect();
    if let Some(i) = edge_bins.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFilter {
            index: i.min(n_mels - 1),
        });
    }

    let mut fb = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb.set(m, k, w);
        }
        if fb.row(m).iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateFilter { index: m });
        }
    }
    Ok(fb)
}
