//! Temporal dependency analysis. A first pass codes every planned
//! frame at the leaf quantizer twice per block, predicting once from
//! reconstructed references and once from the untouched source frames;
//! the gap between the two (R, D) readings is the immediate cost of
//! reference quantization. A second pass walks each group in reverse
//! coding order and accumulates those gaps into per-block totals, so
//! that a block's accumulator ends up holding the extra rate and
//! distortion its own quantization error causes downstream.

use crate::codec::{
    code_block, motion_search, predict_average, predict_inter, predict_intra_dc,
    build_sequence_plan, CodecConfig, Mv, SequencePlan,
};
use crate::codec::dist::sse;
use crate::csv::Cell;
use crate::media::{Frame, Sequence, BLOCK};
use crate::{Error, Result};

/// One reference leg of an inter block: the vector used, the coding
/// cost when only this leg's reference is swapped to its source form,
/// and the resulting immediate quantization impact.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSide {
    pub ref_display: usize,
    pub mv: Mv,
    /// Bits with this side's reference original (other side, if any,
    /// stays reconstructed).
    pub r_src: f64,
    /// Distortion under the same mixed condition.
    pub d_src: f64,
    /// max(d_rec - d_src, 0)
    pub delta_d: f64,
    /// max(r_rec - r_src, 0)
    pub delta_r: f64,
}

/// First-pass record for one 16x16 block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockFlowStats {
    pub bx: usize,
    pub by: usize,
    pub intra: bool,
    /// Winning mode's bits with every reference original. Equals the
    /// reconstructed-side numbers for intra blocks.
    pub r_src: f64,
    pub d_src: f64,
    /// Winning mode's bits and distortion as actually coded, i.e.
    /// against reconstructed references.
    pub r_rec: f64,
    pub d_rec: f64,
    /// Prediction error energy between source pixels for the best
    /// inter candidate; 0 when the frame has no references.
    pub sigma2_src: f64,
    /// Empty for intra blocks: their dependency is cut.
    pub sides: Vec<FlowSide>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFlow {
    pub display: usize,
    /// Raster order, blocks_w * blocks_h entries.
    pub blocks: Vec<BlockFlowStats>,
}

/// Output of the first pass over a planned sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowOutput {
    pub tpl_qstep: f64,
    pub blocks_w: usize,
    pub blocks_h: usize,
    /// Indexed by display order.
    pub frames: Vec<FrameFlow>,
    /// This pass's reconstructions; they served as the reference bank.
    pub recon: Sequence,
}

/// Accumulated downstream rate and distortion per on-grid block.
#[derive(Clone, Debug, PartialEq)]
pub struct TplGrid {
    pub acc_delta_d: Vec<f64>,
    pub acc_delta_r: Vec<f64>,
}

impl TplGrid {
    fn zeros(n: usize) -> TplGrid {
        TplGrid { acc_delta_d: vec![0.0; n], acc_delta_r: vec![0.0; n] }
    }
}

/// Counters for model-assumption violations met during synthesis; all
/// zero on well-formed runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthDiagnostics {
    /// Immediate distortion impact exceeded the block's own coded
    /// distortion; the inheritance ratio was clamped to 1.
    pub delta_d_ratio_clamped: u64,
    /// Source-reference distortion exceeded the reconstructed-reference
    /// distortion; the rate recursion's ratio was clamped to 1.
    pub rho_clamped: u64,
    /// Contributions aimed entirely outside the grid, or at a frame
    /// outside the group being synthesized; dropped.
    pub dropped_contributions: u64,
    /// Worst |sum of grid placements - propagated value| seen.
    pub max_conservation_error: f64,
}

/// Backward-accumulated grids for one group: entry 0 is the frame the
/// group hangs from, entries 1.. are the group's members by display.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSynthesis {
    pub group: usize,
    pub first_display: usize,
    pub grids: Vec<TplGrid>,
    pub diagnostics: SynthDiagnostics,
}

impl GroupSynthesis {
    pub fn grid(&self, display: usize) -> Option<&TplGrid> {
        display.checked_sub(self.first_display).and_then(|i| self.grids.get(i))
    }

    /// Frame-level dependency factor: summed accumulated distortion
    /// over summed coded distortion.
    pub fn beta_frame(&self, flow: &FlowOutput, display: usize) -> Result<f64> {
        let grid = self
            .grid(display)
            .ok_or_else(|| Error::Config(format!("display {display} outside group {}", self.group)))?;
        let num: f64 = grid.acc_delta_d.iter().sum();
        let den: f64 = flow.frames[display].blocks.iter().map(|b| b.d_rec).sum();
        if den <= 0.0 {
            return Err(Error::ZeroDenominator("frame reconstruction distortion"));
        }
        Ok(num / den)
    }
}

/// Block-level dependency factor; 0 for a losslessly coded block.
pub fn beta_block(acc_delta_d: f64, d_rec: f64) -> f64 {
    if d_rec <= 0.0 {
        0.0
    } else {
        acc_delta_d / d_rec
    }
}

/// Distortion a block hands its reference: its own immediate impact
/// plus the share of its accumulated total that the impact explains.
pub fn delta_d_propagate(
    delta_d: f64,
    d_rec: f64,
    acc_delta_d_cur: f64,
    diag: &mut SynthDiagnostics,
) -> f64 {
    let ratio = if d_rec <= 0.0 {
        0.0
    } else if delta_d > d_rec {
        diag.delta_d_ratio_clamped += 1;
        1.0
    } else {
        delta_d / d_rec
    };
    delta_d + ratio * acc_delta_d_cur
}

/// Rate a block hands its reference. The downstream term assumes rate
/// grows with the log of prediction error energy, which folds the
/// accumulated rate into a closed form driven by the ratio of source-
/// to reconstructed-reference distortion.
pub fn delta_r_propagate(
    delta_r: f64,
    d_src: f64,
    d_rec: f64,
    acc_delta_r_cur: f64,
    diag: &mut SynthDiagnostics,
) -> f64 {
    let rho = if d_rec <= 0.0 {
        1.0
    } else if d_src > d_rec {
        diag.rho_clamped += 1;
        1.0
    } else {
        d_src / d_rec
    };
    if rho == 1.0 || acc_delta_r_cur == 0.0 {
        // Identical references, or nothing accumulated yet: the log
        // term is exactly zero. Returning early keeps the identity
        // bit-exact instead of round-tripping through exp2/log2.
        return delta_r;
    }
    let t = 2.0 * acc_delta_r_cur;
    // log2(2^t / (rho 2^t + 1 - rho)) rewritten so that large t cannot
    // overflow: the spread is bounded by -log2(rho).
    delta_r - (rho + (1.0 - rho) * (-t).exp2()).log2()
}

/// One on-grid cell receiving a share of an off-grid contribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub gx: usize,
    pub gy: usize,
    pub weight: f64,
}

/// Splits a 16x16 rectangle at pixel position (px, py) over the block
/// grid. Weights are overlap areas normalized by the total overlapped
/// area, so they sum to 1 whenever any overlap exists; a rectangle
/// entirely off the grid yields no cells.
pub fn overlap_cells(px: i64, py: i64, blocks_w: usize, blocks_h: usize) -> Vec<GridCell> {
    let b = BLOCK as i64;
    let gx0 = px.div_euclid(b);
    let gy0 = py.div_euclid(b);
    let mut cells: Vec<(usize, usize, i64)> = Vec::with_capacity(4);
    let mut total = 0i64;
    for gy in gy0..=gy0 + 1 {
        for gx in gx0..=gx0 + 1 {
            let ox = (px + b).min(gx * b + b) - px.max(gx * b);
            let oy = (py + b).min(gy * b + b) - py.max(gy * b);
            if ox <= 0 || oy <= 0 {
                continue;
            }
            if gx < 0 || gy < 0 || gx >= blocks_w as i64 || gy >= blocks_h as i64 {
                continue;
            }
            cells.push((gx as usize, gy as usize, ox * oy));
            total += ox * oy;
        }
    }
    cells
        .into_iter()
        .map(|(gx, gy, area)| GridCell { gx, gy, weight: area as f64 / total as f64 })
        .collect()
}

/// Accumulates (value_d, value_r) into the grid across the given
/// cells. Returns the totals actually placed.
pub fn distribute_to_grid(
    cells: &[GridCell],
    value_d: f64,
    value_r: f64,
    grid: &mut TplGrid,
    blocks_w: usize,
) -> (f64, f64) {
    let mut placed_d = 0.0;
    let mut placed_r = 0.0;
    for cell in cells {
        let i = cell.gy * blocks_w + cell.gx;
        let d = value_d * cell.weight;
        let r = value_r * cell.weight;
        grid.acc_delta_d[i] += d;
        grid.acc_delta_r[i] += r;
        placed_d += d;
        placed_r += r;
    }
    (placed_d, placed_r)
}

struct InterCandidate {
    r_src: f64,
    d_src: f64,
    r_rec: f64,
    d_rec: f64,
    sigma2_src: f64,
    sides: Vec<FlowSide>,
    recon: [u8; BLOCK * BLOCK],
}

impl InterCandidate {
    fn src_cost(&self, lambda: f64) -> f64 {
        self.d_src + lambda * self.r_src
    }

    /// Cost against the reconstructed reference, the one the final
    /// encoding pass experiences; reference choice follows it.
    fn rec_cost(&self, lambda: f64) -> f64 {
        self.d_rec + lambda * self.r_rec
    }
}

fn single_candidate(
    cur: &[u8; BLOCK * BLOCK],
    x: usize,
    y: usize,
    ref_display: usize,
    rec_ref: &Frame,
    src_ref: &Frame,
    qstep: f64,
    range: i32,
) -> InterCandidate {
    let sr = motion_search(cur, x, y, rec_ref, Mv::default(), range);
    let pred_rec = predict_inter(rec_ref, x, y, sr.mv);
    let pred_src = predict_inter(src_ref, x, y, sr.mv);
    let coded_rec = code_block(cur, &pred_rec, qstep, &[sr.mv]);
    let coded_src = code_block(cur, &pred_src, qstep, &[sr.mv]);
    let d_rec = coded_rec.distortion as f64;
    let d_src = coded_src.distortion as f64;
    let r_rec = coded_rec.bits as f64;
    let r_src = coded_src.bits as f64;
    InterCandidate {
        r_src,
        d_src,
        r_rec,
        d_rec,
        sigma2_src: sse(cur, &pred_src).unwrap() as f64,
        sides: vec![FlowSide {
            ref_display,
            mv: sr.mv,
            r_src,
            d_src,
            delta_d: (d_rec - d_src).max(0.0),
            delta_r: (r_rec - r_src).max(0.0),
        }],
        recon: coded_rec.recon,
    }
}

#[allow(clippy::too_many_arguments)]
fn compound_candidate(
    cur: &[u8; BLOCK * BLOCK],
    x: usize,
    y: usize,
    refs: [usize; 2],
    mvs: [Mv; 2],
    rec_refs: [&Frame; 2],
    src_refs: [&Frame; 2],
    qstep: f64,
) -> InterCandidate {
    let pred_rec = [
        predict_inter(rec_refs[0], x, y, mvs[0]),
        predict_inter(rec_refs[1], x, y, mvs[1]),
    ];
    let pred_src = [
        predict_inter(src_refs[0], x, y, mvs[0]),
        predict_inter(src_refs[1], x, y, mvs[1]),
    ];
    let avg_rr = predict_average(&pred_rec[0], &pred_rec[1]);
    let avg_ss = predict_average(&pred_src[0], &pred_src[1]);
    // Each side's impact is isolated by restoring only that side's
    // reference to its source form.
    let avg_sr = predict_average(&pred_src[0], &pred_rec[1]);
    let avg_rs = predict_average(&pred_rec[0], &pred_src[1]);
    let coded_rr = code_block(cur, &avg_rr, qstep, &mvs);
    let coded_ss = code_block(cur, &avg_ss, qstep, &mvs);
    let coded_sr = code_block(cur, &avg_sr, qstep, &mvs);
    let coded_rs = code_block(cur, &avg_rs, qstep, &mvs);
    let d_rec = coded_rr.distortion as f64;
    let r_rec = coded_rr.bits as f64;
    let mixed = [&coded_sr, &coded_rs];
    let sides = (0..2)
        .map(|i| {
            let d_src = mixed[i].distortion as f64;
            let r_src = mixed[i].bits as f64;
            FlowSide {
                ref_display: refs[i],
                mv: mvs[i],
                r_src,
                d_src,
                delta_d: (d_rec - d_src).max(0.0),
                delta_r: (r_rec - r_src).max(0.0),
            }
        })
        .collect();
    InterCandidate {
        r_src: coded_ss.bits as f64,
        d_src: coded_ss.distortion as f64,
        r_rec,
        d_rec,
        sigma2_src: sse(cur, &avg_ss).unwrap() as f64,
        sides,
        recon: coded_rr.recon,
    }
}

/// First pass: codes every planned frame at `tpl_qstep` in coding
/// order. Inter blocks search reconstructed references and reuse the
/// found vector against the source references, so the (R, D) gap
/// isolates reference quantization rather than motion differences.
/// Among inter candidates the reconstructed-reference cost decides,
/// matching the choice the final encoding pass would make. A block
/// falls back to intra when intra beats the best inter candidate
/// costed with source references; that cuts its dependency.
pub fn motion_flow_pass(
    seq: &Sequence,
    plan: &SequencePlan,
    tpl_qstep: f64,
    cfg: &CodecConfig,
) -> Result<FlowOutput> {
    cfg.validate()?;
    plan.validate()?;
    if plan.frames.len() != seq.frames.len() {
        return Err(Error::Config(format!(
            "plan covers {} frames, sequence has {}",
            plan.frames.len(),
            seq.frames.len()
        )));
    }
    if tpl_qstep <= 0.0 {
        return Err(Error::Config(format!("flow quantizer step {tpl_qstep} must be positive")));
    }
    let lambda = cfg.lambda(tpl_qstep);
    let n = seq.frames.len();
    let blocks_w = seq.frames[0].blocks_w();
    let blocks_h = seq.frames[0].blocks_h();
    let mut recon_bank: Vec<Option<Frame>> = vec![None; n];
    let mut frames: Vec<Option<FrameFlow>> = vec![None; n];
    for fp in &plan.frames {
        let cur = &seq.frames[fp.display];
        let mut rec_refs: Vec<&Frame> = Vec::with_capacity(fp.refs.len());
        let mut src_refs: Vec<&Frame> = Vec::with_capacity(fp.refs.len());
        for &r in &fp.refs {
            rec_refs.push(recon_bank[r].as_ref().ok_or_else(|| {
                Error::Config(format!("frame {r} referenced before coding"))
            })?);
            src_refs.push(&seq.frames[r]);
        }
        let mut recon = Frame::blank_like(cur);
        let mut blocks = Vec::with_capacity(blocks_w * blocks_h);
        for by in 0..blocks_h {
            for bx in 0..blocks_w {
                let (x, y) = (bx * BLOCK, by * BLOCK);
                let cur_block = cur.block(x, y);

                let mut best: Option<InterCandidate> = None;
                let mut singles: Vec<(Mv, usize)> = Vec::with_capacity(fp.refs.len());
                for (i, &r) in fp.refs.iter().enumerate() {
                    let cand = single_candidate(
                        &cur_block,
                        x,
                        y,
                        r,
                        rec_refs[i],
                        src_refs[i],
                        tpl_qstep,
                        cfg.search_range,
                    );
                    singles.push((cand.sides[0].mv, r));
                    if best.as_ref().map_or(true, |b| cand.rec_cost(lambda) < b.rec_cost(lambda)) {
                        best = Some(cand);
                    }
                }
                if let [(mv0, r0), (mv1, r1)] = singles.as_slice() {
                    let cand = compound_candidate(
                        &cur_block,
                        x,
                        y,
                        [*r0, *r1],
                        [*mv0, *mv1],
                        [rec_refs[0], rec_refs[1]],
                        [src_refs[0], src_refs[1]],
                        tpl_qstep,
                    );
                    if best.as_ref().map_or(true, |b| cand.rec_cost(lambda) < b.rec_cost(lambda)) {
                        best = Some(cand);
                    }
                }

                let intra_pred = predict_intra_dc(&recon, x, y);
                let coded_intra = code_block(&cur_block, &intra_pred, tpl_qstep, &[]);
                let intra_cost = coded_intra.distortion as f64 + lambda * coded_intra.bits as f64;

                let take_intra = match &best {
                    None => true,
                    Some(b) => intra_cost < b.src_cost(lambda),
                };
                if take_intra {
                    let bits = coded_intra.bits as f64;
                    let dist = coded_intra.distortion as f64;
                    recon.set_block(x, y, &coded_intra.recon);
                    blocks.push(BlockFlowStats {
                        bx,
                        by,
                        intra: true,
                        r_src: bits,
                        d_src: dist,
                        r_rec: bits,
                        d_rec: dist,
                        sigma2_src: best.as_ref().map_or(0.0, |b| b.sigma2_src),
                        sides: Vec::new(),
                    });
                } else {
                    let b = best.unwrap();
                    recon.set_block(x, y, &b.recon);
                    blocks.push(BlockFlowStats {
                        bx,
                        by,
                        intra: false,
                        r_src: b.r_src,
                        d_src: b.d_src,
                        r_rec: b.r_rec,
                        d_rec: b.d_rec,
                        sigma2_src: b.sigma2_src,
                        sides: b.sides,
                    });
                }
            }
        }
        frames[fp.display] = Some(FrameFlow { display: fp.display, blocks });
        recon_bank[fp.display] = Some(recon);
    }
    Ok(FlowOutput {
        tpl_qstep,
        blocks_w,
        blocks_h,
        frames: frames.into_iter().map(|f| f.unwrap()).collect(),
        recon: Sequence {
            frames: recon_bank.into_iter().map(|f| f.unwrap()).collect(),
            frame_rate: seq.frame_rate,
        },
    })
}

/// Second pass for one group: visits its members in reverse coding
/// order, so every block's accumulators are settled before the block
/// hands anything to its references. Contributions land on the
/// displaced 16x16 rectangle, split by overlap area; the frame the
/// group hangs from has a grid of its own and receives its share.
pub fn synthesize_dependency(
    flow: &FlowOutput,
    plan: &SequencePlan,
    group: usize,
) -> Result<GroupSynthesis> {
    if group >= plan.group_count() {
        return Err(Error::Config(format!(
            "group {group} out of range ({} groups)",
            plan.group_count()
        )));
    }
    let seg = plan.segment(group);
    let first_display = seg.anchor_display;
    let cells_per_frame = flow.blocks_w * flow.blocks_h;
    let mut grids: Vec<TplGrid> =
        (0..=plan.gop_length).map(|_| TplGrid::zeros(cells_per_frame)).collect();
    let mut diag = SynthDiagnostics::default();
    for fp in seg.frames.iter().rev() {
        let row = &flow.frames[fp.display];
        for (i, stats) in row.blocks.iter().enumerate() {
            if stats.sides.is_empty() {
                continue;
            }
            let acc_d = grids[fp.display - first_display].acc_delta_d[i];
            let acc_r = grids[fp.display - first_display].acc_delta_r[i];
            let x = (stats.bx * BLOCK) as i64;
            let y = (stats.by * BLOCK) as i64;
            for side in &stats.sides {
                let contrib_d = delta_d_propagate(side.delta_d, stats.d_rec, acc_d, &mut diag);
                let contrib_r =
                    delta_r_propagate(side.delta_r, side.d_src, stats.d_rec, acc_r, &mut diag);
                if contrib_d == 0.0 && contrib_r == 0.0 {
                    continue;
                }
                if side.ref_display < first_display
                    || side.ref_display > first_display + plan.gop_length
                {
                    diag.dropped_contributions += 1;
                    continue;
                }
                let cells = overlap_cells(
                    x + side.mv.x as i64,
                    y + side.mv.y as i64,
                    flow.blocks_w,
                    flow.blocks_h,
                );
                if cells.is_empty() {
                    diag.dropped_contributions += 1;
                    continue;
                }
                let target = &mut grids[side.ref_display - first_display];
                let (placed_d, placed_r) =
                    distribute_to_grid(&cells, contrib_d, contrib_r, target, flow.blocks_w);
                diag.max_conservation_error = diag
                    .max_conservation_error
                    .max((placed_d - contrib_d).abs())
                    .max((placed_r - contrib_r).abs());
            }
        }
    }
    Ok(GroupSynthesis { group, first_display, grids, diagnostics: diag })
}

pub fn synthesize_all(flow: &FlowOutput, plan: &SequencePlan) -> Result<Vec<GroupSynthesis>> {
    (0..plan.group_count()).map(|g| synthesize_dependency(flow, plan, g)).collect()
}

/// The grid row that speaks for a frame's own downstream impact: the
/// row from the group the frame is a member of. The intra opener is a
/// member of no group and is represented by group 0's hanging-frame
/// row.
pub fn canonical_grid<'a>(
    groups: &'a [GroupSynthesis],
    plan: &SequencePlan,
    display: usize,
) -> &'a TplGrid {
    if display == 0 {
        &groups[0].grids[0]
    } else {
        let g = (display - 1) / plan.gop_length;
        groups[g].grid(display).expect("member display within its own group")
    }
}

/// Everything the dependency model produces for a sequence.
pub struct TplAnalysis {
    pub plan: SequencePlan,
    pub flow: FlowOutput,
    pub groups: Vec<GroupSynthesis>,
}

pub fn analyze_sequence(seq: &Sequence, cfg: &CodecConfig) -> Result<TplAnalysis> {
    let plan = build_sequence_plan(seq.frames.len(), cfg)?;
    let flow = motion_flow_pass(seq, &plan, plan.leaf_qstep(), cfg)?;
    let groups = synthesize_all(&flow, &plan)?;
    Ok(TplAnalysis { plan, flow, groups })
}

pub const DUMP_HEADER: [&str; 16] = [
    "frame", "block_x", "block_y", "mode", "ref0", "mv0x", "mv0y", "r_src", "d_src", "r_rec",
    "d_rec", "delta_d", "delta_r", "acc_delta_d", "acc_delta_r", "beta",
];

/// Per-block rows matching DUMP_HEADER; compound blocks report their
/// first reference leg in the per-side columns.
pub fn dump_rows(analysis: &TplAnalysis) -> Vec<Vec<Cell>> {
    let TplAnalysis { plan, flow, groups } = analysis;
    let mut rows = Vec::new();
    for row in &flow.frames {
        let grid = canonical_grid(groups, plan, row.display);
        for (i, b) in row.blocks.iter().enumerate() {
            let mode = if b.intra {
                "intra"
            } else if b.sides.len() == 2 {
                "compound"
            } else {
                "single"
            };
            let (ref0, mv) = match b.sides.first() {
                Some(s) => (s.ref_display as i64, s.mv),
                None => (-1, Mv::default()),
            };
            let (dd, dr) = match b.sides.first() {
                Some(s) => (s.delta_d, s.delta_r),
                None => (0.0, 0.0),
            };
            rows.push(vec![
                Cell::from(row.display),
                Cell::from(b.bx),
                Cell::from(b.by),
                Cell::from(mode),
                Cell::from(ref0),
                Cell::from(mv.x as i64),
                Cell::from(mv.y as i64),
                Cell::from(b.r_src),
                Cell::from(b.d_src),
                Cell::from(b.r_rec),
                Cell::from(b.d_rec),
                Cell::from(dd),
                Cell::from(dr),
                Cell::from(grid.acc_delta_d[i]),
                Cell::from(grid.acc_delta_r[i]),
                Cell::from(beta_block(grid.acc_delta_d[i], b.d_rec)),
            ]);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::GopMode;
    use crate::media::{synth_sequence, SynthKind};
    use approx::assert_abs_diff_eq;

    fn diag() -> SynthDiagnostics {
        SynthDiagnostics::default()
    }

    #[test]
    fn distortion_recursion_hand_values() {
        let mut d = diag();
        assert_eq!(delta_d_propagate(0.0, 40.0, 20.0, &mut d), 0.0);
        assert_eq!(delta_d_propagate(10.0, 40.0, 20.0, &mut d), 15.0);
        assert_eq!(delta_d_propagate(10.0, 40.0, 0.0, &mut d), 10.0);
        assert_eq!(d, diag());
    }

    #[test]
    fn distortion_recursion_clamps_excess_ratio() {
        let mut d = diag();
        // Impact larger than the block's own distortion: inherit all.
        assert_eq!(delta_d_propagate(50.0, 40.0, 20.0, &mut d), 70.0);
        assert_eq!(d.delta_d_ratio_clamped, 1);
        // Lossless block inherits nothing.
        assert_eq!(delta_d_propagate(5.0, 0.0, 20.0, &mut d), 5.0);
    }

    #[test]
    fn rate_recursion_identities_are_exact() {
        let mut d = diag();
        // Equal references: spread term vanishes.
        assert_eq!(delta_r_propagate(3.25, 40.0, 40.0, 7.0, &mut d), 3.25);
        // Empty accumulator: nothing downstream to inflate.
        assert_eq!(delta_r_propagate(3.25, 10.0, 40.0, 0.0, &mut d), 3.25);
        assert_eq!(d, diag());
    }

    #[test]
    fn rate_recursion_hand_value() {
        let mut d = diag();
        let got = delta_r_propagate(2.0, 20.0, 40.0, 1.0, &mut d);
        assert_abs_diff_eq!(got, 2.0 + 1.6f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(got, 2.678071905112638, epsilon = 1e-12);
    }

    #[test]
    fn rate_recursion_survives_large_accumulators() {
        let mut d = diag();
        // Naive 2^(2 acc) would overflow; the spread must stay at
        // -log2(rho).
        let got = delta_r_propagate(1.0, 30.0, 40.0, 10_000.0, &mut d);
        assert_abs_diff_eq!(got, 1.0 - 0.75f64.log2(), epsilon = 1e-9);
    }

    #[test]
    fn rate_recursion_clamps_rho_above_one() {
        let mut d = diag();
        assert_eq!(delta_r_propagate(2.0, 80.0, 40.0, 5.0, &mut d), 2.0);
        assert_eq!(d.rho_clamped, 1);
    }

    #[test]
    fn overlap_weights_follow_area() {
        let aligned = overlap_cells(32, 16, 4, 4);
        assert_eq!(aligned, vec![GridCell { gx: 2, gy: 1, weight: 1.0 }]);

        let quartered = overlap_cells(8, 8, 4, 4);
        assert_eq!(quartered.len(), 4);
        for c in &quartered {
            assert_eq!(c.weight, 0.25);
        }

        let split = overlap_cells(4, 0, 4, 4);
        assert_eq!(split.len(), 2);
        assert_eq!(split[0], GridCell { gx: 0, gy: 0, weight: 0.75 });
        assert_eq!(split[1], GridCell { gx: 1, gy: 0, weight: 0.25 });
    }

    #[test]
    fn overlap_outside_grid_is_empty_or_renormalized() {
        assert!(overlap_cells(-16, 0, 4, 4).is_empty());
        // Half off the left edge: the in-grid half takes everything.
        let clipped = overlap_cells(-8, 0, 4, 4);
        assert_eq!(clipped, vec![GridCell { gx: 0, gy: 0, weight: 1.0 }]);
    }

    #[test]
    fn distribution_conserves_value() {
        let cells = overlap_cells(12, 36, 4, 4);
        let mut grid = TplGrid::zeros(16);
        let (pd, pr) = distribute_to_grid(&cells, 640.0, 96.0, &mut grid, 4);
        assert_abs_diff_eq!(pd, 640.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pr, 96.0, epsilon = 1e-9);
        assert_abs_diff_eq!(grid.acc_delta_d.iter().sum::<f64>(), 640.0, epsilon = 1e-9);
        assert_abs_diff_eq!(grid.acc_delta_r.iter().sum::<f64>(), 96.0, epsilon = 1e-9);
    }

    fn low_delay_cfg(qstep: f64, gop: usize) -> CodecConfig {
        let mut cfg = CodecConfig::new(qstep);
        cfg.gop_mode = GopMode::LowDelay;
        cfg.gop_length = gop;
        cfg
    }

    #[test]
    fn near_lossless_pass_has_no_quantization_gap() {
        let seq = synth_sequence(SynthKind::Shift { dx: 1, dy: 0 }, 48, 48, 5, 0).unwrap();
        let cfg = low_delay_cfg(1e-4, 4);
        let plan = build_sequence_plan(5, &cfg).unwrap();
        let flow = motion_flow_pass(&seq, &plan, 1e-4, &cfg).unwrap();
        for row in &flow.frames[1..] {
            for b in &row.blocks {
                assert_eq!(b.d_src, b.d_rec);
                for s in &b.sides {
                    assert_eq!(s.delta_d, 0.0);
                    assert_eq!(s.delta_r, 0.0);
                }
            }
        }
        let groups = synthesize_all(&flow, &plan).unwrap();
        for g in &groups {
            for grid in &g.grids {
                assert!(grid.acc_delta_d.iter().all(|&v| v == 0.0));
                assert!(grid.acc_delta_r.iter().all(|&v| v == 0.0));
            }
        }
    }

    /// Flat frames apart from a sign pattern matching one transform
    /// basis function, so every analysis quantity is hand-checkable.
    fn checker_sequence(frames: usize) -> Sequence {
        let sign = |i: usize| if matches!(i % 4, 0 | 3) { 1i32 } else { -1 };
        let mut samples = vec![0u8; 64 * 64];
        for y in 0..64 {
            for x in 0..64 {
                samples[y * 64 + x] = (128 + 7 * sign(x) * sign(y)) as u8;
            }
        }
        let frame = Frame::from_unpadded(64, 64, &samples).unwrap();
        Sequence { frames: vec![frame; frames], frame_rate: 30.0 }
    }

    #[test]
    fn static_chain_accumulates_one_hop_per_frame() {
        // At step 48 the anchor's single surviving coefficient lands
        // one spatial unit short, so its reconstruction is off by
        // exactly 1 at every sample; each later frame re-predicts that
        // error and quantizes the tiny residual away, handing the full
        // 256-sample distortion down the chain undamped.
        let seq = checker_sequence(5);
        let cfg = low_delay_cfg(48.0, 4);
        let plan = build_sequence_plan(5, &cfg).unwrap();
        let flow = motion_flow_pass(&seq, &plan, plan.leaf_qstep(), &cfg).unwrap();
        for row in &flow.frames[1..] {
            for b in &row.blocks {
                assert!(!b.intra, "frame {} stayed inter", row.display);
                assert_eq!(b.sides[0].mv, Mv::default());
                assert_eq!(b.d_src, 0.0);
                assert_eq!(b.d_rec, 256.0);
            }
        }
        let groups = synthesize_all(&flow, &plan).unwrap();
        let g = &groups[0];
        for k in 0..4usize {
            let display = 4 - k;
            let beta = g.beta_frame(&flow, display).unwrap();
            assert_abs_diff_eq!(beta, k as f64, epsilon = 1e-9);
        }
        assert_eq!(g.diagnostics, SynthDiagnostics::default());
    }

    #[test]
    fn last_coded_member_keeps_zero_accumulators() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 1, dy: 1, amplitude: 5 }, 64, 64, 9, 11)
                .unwrap();
        let mut cfg = CodecConfig::new(20.0);
        cfg.gop_length = 8;
        let plan = build_sequence_plan(9, &cfg).unwrap();
        let flow = motion_flow_pass(&seq, &plan, plan.leaf_qstep(), &cfg).unwrap();
        let g = synthesize_dependency(&flow, &plan, 0).unwrap();
        let last = plan.frames.last().unwrap().display;
        let grid = g.grid(last).unwrap();
        assert!(grid.acc_delta_d.iter().all(|&v| v == 0.0));
        assert!(grid.acc_delta_r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthesis_is_conservative_on_moving_content() {
        let seq =
            synth_sequence(SynthKind::NoisyShift { dx: 3, dy: 2, amplitude: 4 }, 64, 64, 9, 3)
                .unwrap();
        let mut cfg = CodecConfig::new(28.0);
        cfg.gop_length = 4;
        let plan = build_sequence_plan(9, &cfg).unwrap();
        let flow = motion_flow_pass(&seq, &plan, plan.leaf_qstep(), &cfg).unwrap();
        let moved = flow.frames[1..]
            .iter()
            .flat_map(|r| &r.blocks)
            .flat_map(|b| &b.sides)
            .any(|s| s.mv.x % BLOCK as i32 != 0 || s.mv.y % BLOCK as i32 != 0);
        assert!(moved, "expected off-grid vectors to exercise the overlap split");
        for g in synthesize_all(&flow, &plan).unwrap() {
            assert!(g.diagnostics.max_conservation_error <= 1e-9);
            assert_eq!(g.diagnostics.dropped_contributions, 0);
        }
    }

    #[test]
    fn beta_frame_rejects_lossless_denominator() {
        let seq = synth_sequence(SynthKind::Static, 32, 32, 3, 0).unwrap();
        let cfg = low_delay_cfg(1e-4, 2);
        let plan = build_sequence_plan(3, &cfg).unwrap();
        let flow = motion_flow_pass(&seq, &plan, 1e-4, &cfg).unwrap();
        let g = synthesize_dependency(&flow, &plan, 0).unwrap();
        assert!(matches!(
            g.beta_frame(&flow, 2),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn dump_rows_cover_every_block() {
        let seq = synth_sequence(SynthKind::Shift { dx: 2, dy: 0 }, 48, 32, 5, 2).unwrap();
        let cfg = low_delay_cfg(16.0, 4);
        let analysis = analyze_sequence(&seq, &cfg).unwrap();
        let rows = dump_rows(&analysis);
        assert_eq!(rows.len(), 5 * 3 * 2);
        assert!(rows.iter().all(|r| r.len() == DUMP_HEADER.len()));
    }
}
