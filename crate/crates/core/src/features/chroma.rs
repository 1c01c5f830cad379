use super::Matrix;

/// Pitch class of FFT bin `k` (0 = C, 9 = A). Bin 0 has no pitch.
pub fn bin_pitch_class(k: usize, fft_size: usize, sample_rate_hz: u32) -> Option<usize> {
    if k == 0 {
        return None;
    }
    let f = k as f64 * sample_rate_hz as f64 / fft_size as f64;
    let semis = (12.0 * (f / 440.0).log2()).round() as i64;
    Some((semis + 9).rem_euclid(12) as usize)
}

/// Folds a power spectrogram into 12 pitch classes, each frame scaled so its
/// maximum is 1. Silent frames stay zero.
pub fn chroma_from_power(power: &Matrix, fft_size: usize, sample_rate_hz: u32) -> Matrix {
    let classes: Vec<Option<usize>> = (0..power.cols())
        .map(|k| bin_pitch_class(k, fft_size, sample_rate_hz))
        .collect();
    let mut out = Matrix::zeros(power.rows(), 12);
    for t in 0..power.rows() {
        let row = out.row_mut(t);
        for (p, class) in power.row(t).iter().zip(&classes) {
            if let Some(c) = class {
                row[*c] += p;
            }
        }
        let max = row.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            row.iter_mut().for_each(|v| *v /= max);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a440_maps_to_class_nine() {
        // 440 Hz is bin 56.32 at 2048/16k; the nearest bins still round to A.
        assert_eq!(bin_pitch_class(56, 2048, 16000), Some(9));
        assert_eq!(bin_pitch_class(0, 2048, 16000), None);
        // 261.6 Hz (middle C) ~ bin 33.5
        assert_eq!(bin_pitch_class(34, 2048, 16000), Some(0));
    }
}
