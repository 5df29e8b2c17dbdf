//! Bit accounting via signed Exp-Golomb code lengths. Nothing is
//! actually emitted; the codec only needs the rate.

use super::Mv;

fn ue_bits(k: u64) -> u64 {
    // Order-0 Exp-Golomb: 2 floor(log2(k + 1)) + 1 bits.
    let log = 63 - (k + 1).leading_zeros() as u64;
    2 * log + 1
}

/// Code length of a signed value: 0 -> 1, +/-1 -> 3, +/-2, +/-3 -> 5, ...
pub fn se_bits(v: i32) -> u64 {
    let v = v as i64;
    let k = if v > 0 { 2 * v as u64 - 1 } else { (-v) as u64 * 2 };
    ue_bits(k)
}

/// Code length of a motion vector difference.
pub fn mv_bits(mv: Mv) -> u64 {
    se_bits(mv.x) + se_bits(mv.y)
}

/// Total bits of one coded block: every quantized level plus the given
/// motion vector differences (none for intra, one per reference).
pub fn block_bits(levels: &[i32], mv_diffs: &[Mv]) -> u64 {
    let mut bits: u64 = levels.iter().map(|&l| se_bits(l)).sum();
    for &mv in mv_diffs {
        bits += mv_bits(mv);
    }
    bits
}
