//! Sample-domain distortion metrics: SSE, SAD, and Hadamard SATD.

use crate::media::BLOCK;
use crate::{Error, Result};

/// Sum of squared differences between two equally sized sample arrays.
pub fn sse(a: &[u8], b: &[u8]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum())
}

/// Sum of absolute differences; the motion search metric.
pub(crate) fn sad(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
        .sum()
}

fn hadamard8_1d(v: &mut [i64; 8]) {
    for stride in [1usize, 2, 4] {
        let mut out = [0i64; 8];
        let mut i = 0;
        while i < 8 {
            for j in 0..stride {
                out[i + j] = v[i + j] + v[i + j + stride];
                out[i + j + stride] = v[i + j] - v[i + j + stride];
            }
            i += 2 * stride;
        }
        *v = out;
    }
}

/// Unnormalized 8x8 Hadamard transform magnitude of a residual tile.
fn hadamard8_abs_sum(residual: &[i64; 64]) -> u64 {
    let mut m = *residual;
    for r in 0..8 {
        let mut row = [0i64; 8];
        row.copy_from_slice(&m[r * 8..(r + 1) * 8]);
        hadamard8_1d(&mut row);
        m[r * 8..(r + 1) * 8].copy_from_slice(&row);
    }
    let mut sum = 0u64;
    for c in 0..8 {
        let mut col = [0i64; 8];
        for r in 0..8 {
            col[r] = m[r * 8 + c];
        }
        hadamard8_1d(&mut col);
        sum += col.iter().map(|v| v.unsigned_abs()).sum::<u64>();
    }
    sum
}

/// SATD of a 16x16 block pair: the residual is split into four 8x8
/// tiles, each transformed by an unnormalized Hadamard, and the
/// absolute transform values are summed.
pub fn satd(a: &[u8], b: &[u8]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    if a.len() != BLOCK * BLOCK {
        return Err(Error::DimensionMismatch(a.len(), BLOCK * BLOCK));
    }
    let mut total = 0u64;
    for ty in [0usize, 8] {
        for tx in [0usize, 8] {
            let mut tile = [0i64; 64];
            for r in 0..8 {
                for c in 0..8 {
                    let i = (ty + r) * BLOCK + tx + c;
                    tile[r * 8 + c] = a[i] as i64 - b[i] as i64;
                }
            }
            total += hadamard8_abs_sum(&tile);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sse_matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
            let b: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
            let mut expect = 0u64;
            for i in 0..256 {
                let d = a[i] as i64 - b[i] as i64;
                expect += (d * d) as u64;
            }
            assert_eq!(sse(&a, &b).unwrap(), expect);
        }
    }

    #[test]
    fn sse_rejects_mismatched_lengths() {
        assert!(matches!(
            sse(&[0u8; 4], &[0u8; 5]),
            Err(Error::DimensionMismatch(4, 5))
        ));
    }

    #[test]
    fn satd_of_constant_tile_is_dc_only() {
        let mut a = [0u8; 256];
        for r in 0..8 {
            for c in 0..8 {
                a[r * 16 + c] = 1;
            }
        }
        let b = [0u8; 256];
        assert_eq!(satd(&a, &b).unwrap(), 64);
    }

    #[test]
    fn satd_is_symmetric_and_zero_on_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
        let b: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
        assert_eq!(satd(&a, &b).unwrap(), satd(&b, &a).unwrap());
        assert_eq!(satd(&a, &a).unwrap(), 0);
    }

    #[test]
    fn satd_requires_16x16() {
        assert!(satd(&[0u8; 64], &[0u8; 64]).is_err());
    }
}
