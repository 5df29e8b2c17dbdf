//! Exhaustive integer-pel motion search.

use super::dist::sad;
use super::Mv;
use crate::media::{Frame, BLOCK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchResult {
    pub mv: Mv,
    pub sad: u64,
}

/// Full search over a square window of `range` pels around `center`.
///
/// A candidate vector points from the block position to the prediction
/// block in the reference: predictor top-left = (x + mv.x, y + mv.y).
/// Candidates whose prediction block leaves the padded frame are
/// skipped. Ties are broken by the smaller |mv|, then by scan order.
pub fn motion_search(
    cur: &[u8; BLOCK * BLOCK],
    x: usize,
    y: usize,
    reference: &Frame,
    center: Mv,
    range: i32,
) -> SearchResult {
    let max_x = (reference.width - BLOCK) as i64;
    let max_y = (reference.height - BLOCK) as i64;
    let mut best: Option<(u64, i64, Mv)> = None;
    for dy in -range..=range {
        for dx in -range..=range {
            let mv = Mv { x: center.x + dx, y: center.y + dy };
            let rx = x as i64 + mv.x as i64;
            let ry = y as i64 + mv.y as i64;
            if rx < 0 || ry < 0 || rx > max_x || ry > max_y {
                continue;
            }
            let candidate = reference.block(rx as usize, ry as usize);
            let cost = sad(cur, &candidate);
            let norm = (mv.x as i64).pow(2) + (mv.y as i64).pow(2);
            let better = match &best {
                None => true,
                Some((bc, bn, _)) => cost < *bc || (cost == *bc && norm < *bn),
            };
            if better {
                best = Some((cost, norm, mv));
            }
        }
    }
    let (sad, _, mv) = best.expect("search window contains no valid candidate");
    SearchResult { mv, sad }
}
