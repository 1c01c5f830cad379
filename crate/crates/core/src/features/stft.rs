use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Matrix;

/// Reusable power-spectrogram plan: reflect-centered frames, periodic Hann
/// window, `|X[k]|²` for `k` in `0..=fft_size/2`.
#[derive(Clone)]
pub struct Stft {
    fft_size: usize,
    hop_size: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("fft_size", &self.fft_size)
            .field("hop_size", &self.hop_size)
            .finish()
    }
}

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into a signal of length `len` after symmetric reflection that
/// excludes the edge sample (numpy "reflect").
pub(crate) fn reflect_index(mut idx: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    idx = idx.rem_euclid(period);
    if idx >= len as isize {
        idx = period - idx;
    }
    idx as usize
}

impl Stft {
    pub fn new(fft_size: usize, hop_size: usize) -> Self {
        assert!(
            fft_size.is_power_of_two(),
            "fft_size must be a power of two"
        );
        assert!(hop_size > 0, "hop_size must be positive");
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Self {
            fft_size,
            hop_size,
            window: periodic_hann(fft_size),
            fft,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        1 + signal_len / self.hop_size
    }

    /// Windowed, centered frame `t` of `signal`.
    pub fn frame(&self, signal: &[f32], t: usize) -> Vec<f64> {
        let half = (self.fft_size / 2) as isize;
        let start = (t * self.hop_size) as isize - half;
        (0..self.fft_size)
            .map(|i| {
                let idx = reflect_index(start + i as isize, signal.len());
                signal[idx] as f64 * self.window[i]
            })
            .collect()
    }

    pub fn power(&self, signal: &[f32]) -> Matrix {
        assert!(!signal.is_empty(), "empty signal");
        let n_frames = self.n_frames(signal.len());
        let n_bins = self.n_bins();
        let mut out = Matrix::zeros(n_frames, n_bins);
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            for (b, x) in buf.iter_mut().zip(self.frame(signal, t)) {
                *b = Complex::new(x, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, x) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
                *o = x.norm_sqr();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_matches_numpy() {
        // np.pad([0,1,2,3], 3, mode="reflect") -> [3,2,1,0,1,2,3,2,1,0]
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn hann_is_periodic() {
        let w = periodic_hann(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[7]).abs() < 1e-15);
    }

    #[test]
    fn frame_count() {
        let stft = Stft::new(2048, 512);
        assert_eq!(stft.n_frames(48000), 94);
        assert_eq!(stft.n_frames(16000), 32);
        assert_eq!(stft.n_frames(80000), 157);
    }
}
