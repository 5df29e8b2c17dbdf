//! Block predictors: motion-compensated, compound average, and DC
//! intra.

use super::Mv;
use crate::media::{Frame, BLOCK};

/// Motion-compensated prediction. The displaced block is clamped into
/// the padded frame, so every vector yields a valid prediction.
pub fn predict_inter(reference: &Frame, x: usize, y: usize, mv: Mv) -> [u8; BLOCK * BLOCK] {
    let rx = (x as i64 + mv.x as i64).clamp(0, (reference.width - BLOCK) as i64);
    let ry = (y as i64 + mv.y as i64).clamp(0, (reference.height - BLOCK) as i64);
    reference.block(rx as usize, ry as usize)
}

/// Rounded average of two predictions.
pub fn predict_average(a: &[u8; BLOCK * BLOCK], b: &[u8; BLOCK * BLOCK]) -> [u8; BLOCK * BLOCK] {
    let mut out = [0u8; BLOCK * BLOCK];
    for i in 0..BLOCK * BLOCK {
        out[i] = ((a[i] as u16 + b[i] as u16 + 1) >> 1) as u8;
    }
    out
}

/// DC prediction from the row above and the column left of the block
/// in `neighbors` (the reconstruction under construction for coding,
/// the source frame for source-side analysis). With no neighbors the
/// prediction is flat 128.
pub fn predict_intra_dc(neighbors: &Frame, x: usize, y: usize) -> [u8; BLOCK * BLOCK] {
    let mut sum = 0u32;
    let mut count = 0u32;
    if y > 0 {
        for c in 0..BLOCK {
            sum += neighbors.sample(x + c, y - 1) as u32;
        }
        count += BLOCK as u32;
    }
    if x > 0 {
        for r in 0..BLOCK {
            sum += neighbors.sample(x - 1, y + r) as u32;
        }
        count += BLOCK as u32;
    }
    let dc = if count == 0 {
        128
    } else {
        (sum as f64 / count as f64).round() as u8
    };
    [dc; BLOCK * BLOCK]
}
