//! Transform coding of one 16x16 block against a prediction.

use super::dct::{dct16_forward, dct16_inverse};
use super::dist::sse;
use super::entropy::block_bits;
use super::{dequantize, quantize, Mv, RdCost};
use crate::media::BLOCK;

#[derive(Clone, Debug)]
pub struct CodedBlock {
    pub bits: u64,
    pub distortion: u64,
    pub recon: [u8; BLOCK * BLOCK],
}

impl CodedBlock {
    pub fn rd(&self) -> RdCost {
        RdCost { rate: self.bits as f64, distortion: self.distortion as f64 }
    }

    pub fn cost(&self, lambda: f64) -> f64 {
        self.rd().cost(lambda)
    }
}

/// Codes `cur` against `prediction`: residual, DCT, scalar
/// quantization, Exp-Golomb rate, reconstruction clamped to 8 bits.
/// `mv_diffs` is empty for intra and carries one vector per reference
/// otherwise; its code length is part of the rate.
pub fn code_block(
    cur: &[u8; BLOCK * BLOCK],
    prediction: &[u8; BLOCK * BLOCK],
    qstep: f64,
    mv_diffs: &[Mv],
) -> CodedBlock {
    debug_assert!(qstep > 0.0);
    let mut residual = [0.0f64; BLOCK * BLOCK];
    for i in 0..BLOCK * BLOCK {
        residual[i] = cur[i] as f64 - prediction[i] as f64;
    }
    let coeffs = dct16_forward(&residual);
    let mut levels = [0i32; BLOCK * BLOCK];
    let mut deq = [0.0f64; BLOCK * BLOCK];
    for i in 0..BLOCK * BLOCK {
        levels[i] = quantize(coeffs[i], qstep);
        deq[i] = dequantize(levels[i], qstep);
    }
    let bits = block_bits(&levels, mv_diffs);
    let decoded = dct16_inverse(&deq);
    let mut recon = [0u8; BLOCK * BLOCK];
    for i in 0..BLOCK * BLOCK {
        recon[i] = (prediction[i] as f64 + decoded[i]).round().clamp(0.0, 255.0) as u8;
    }
    let distortion = sse(cur, &recon).unwrap();
    CodedBlock { bits, distortion, recon }
}
