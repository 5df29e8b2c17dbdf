//! Orthonormal 16x16 type-II DCT pair.
//!
//! The basis is orthonormal, so the transform preserves energy exactly
//! and the inverse is the transpose; a constant block of value v maps
//! to a DC coefficient of 16 v.

use std::sync::LazyLock;

use crate::media::BLOCK;

const N: usize = BLOCK;

/// BASIS[u * 16 + x] = c(u) cos((2x + 1) u pi / 32).
static BASIS: LazyLock<[f64; N * N]> = LazyLock::new(|| {
    let mut b = [0.0; N * N];
    for u in 0..N {
        let scale = if u == 0 {
            (1.0 / N as f64).sqrt()
        } else {
            (2.0 / N as f64).sqrt()
        };
        for x in 0..N {
            let angle = (2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * N) as f64;
            b[u * N + x] = scale * angle.cos();
        }
    }
    b
});

/// Forward 2-D transform of a row-major 16x16 block.
pub fn dct16_forward(block: &[f64; N * N]) -> [f64; N * N] {
    let b = &*BASIS;
    let mut tmp = [0.0; N * N];
    // Columns: tmp[u][c] = sum_r basis[u][r] block[r][c].
    for u in 0..N {
        for c in 0..N {
            let mut acc = 0.0;
            for r in 0..N {
                acc += b[u * N + r] * block[r * N + c];
            }
            tmp[u * N + c] = acc;
        }
    }
    let mut out = [0.0; N * N];
    // Rows: out[u][v] = sum_c basis[v][c] tmp[u][c].
    for u in 0..N {
        for v in 0..N {
            let mut acc = 0.0;
            for c in 0..N {
                acc += b[v * N + c] * tmp[u * N + c];
            }
            out[u * N + v] = acc;
        }
    }
    out
}

/// Inverse of [`dct16_forward`].
pub fn dct16_inverse(coeffs: &[f64; N * N]) -> [f64; N * N] {
    let b = &*BASIS;
    let mut tmp = [0.0; N * N];
    // Rows of the transpose: tmp[r][v] = sum_u basis[u][r] coeffs[u][v].
    for r in 0..N {
        for v in 0..N {
            let mut acc = 0.0;
            for u in 0..N {
                acc += b[u * N + r] * coeffs[u * N + v];
            }
            tmp[r * N + v] = acc;
        }
    }
    let mut out = [0.0; N * N];
    for r in 0..N {
        for c in 0..N {
            let mut acc = 0.0;
            for v in 0..N {
                acc += b[v * N + c] * tmp[r * N + v];
            }
            out[r * N + c] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_block_concentrates_in_dc() {
        let block = [16.0; 256];
        let coeffs = dct16_forward(&block);
        assert!((coeffs[0] - 256.0).abs() < 1e-9, "dc = {}", coeffs[0]);
        for (i, c) in coeffs.iter().enumerate().skip(1) {
            assert!(c.abs() < 1e-9, "ac {i} = {c}");
        }
    }

    #[test]
    fn roundtrip_and_energy_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut block = [0.0; 256];
            for v in block.iter_mut() {
                *v = rng.gen_range(-255.0..255.0);
            }
            let coeffs = dct16_forward(&block);
            let back = dct16_inverse(&coeffs);
            let max_err = block
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-6, "roundtrip error {max_err}");

            let ein: f64 = block.iter().map(|v| v * v).sum();
            let eout: f64 = coeffs.iter().map(|v| v * v).sum();
            assert!((ein - eout).abs() <= 1e-9 * ein.max(1.0), "{ein} vs {eout}");
        }
    }
}
