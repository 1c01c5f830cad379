use std::f64::consts::PI;

use super::Matrix;

/// Orthonormal DCT-II basis, `n_out` rows by `n_in` columns.
pub fn dct_ii_matrix(n_out: usize, n_in: usize) -> Matrix {
    assert!(n_out <= n_in, "n_out must not exceed n_in");
    let mut d = Matrix::zeros(n_out, n_in);
    let s0 = (1.0 / n_in as f64).sqrt();
    let s = (2.0 / n_in as f64).sqrt();
    for i in 0..n_out {
        let scale = if i == 0 { s0 } else { s };
        for j in 0..n_in {
            d.set(
                i,
                j,
                scale * (PI * i as f64 * (2 * j + 1) as f64 / (2 * n_in) as f64).cos(),
            );
        }
    }
    d
}
