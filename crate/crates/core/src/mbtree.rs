//! Lookahead propagation baselines. A single pass over the source
//! frames estimates, per 16x16 block, how much cheaper inter coding is
//! than intra via SATD, and a backward walk accumulates that saving
//! along the motion trail. Two variants ship: the plain recursion, and
//! one that additionally scales each hop by how much of the prediction
//! error the quantizer actually keeps, using the measured coding
//! numbers from a completed dependency flow pass.

use crate::codec::dist::satd;
use crate::codec::{
    motion_search, predict_average, predict_inter, predict_intra_dc, CodecConfig, Mv, SequencePlan,
};
use crate::csv::Cell;
use crate::media::{Sequence, BLOCK};
use crate::tpl::{overlap_cells, FlowOutput, SynthDiagnostics};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MbVariant {
    Plain,
    Quant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MbSide {
    pub ref_display: usize,
    pub mv: Mv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbBlockStats {
    pub bx: usize,
    pub by: usize,
    /// SATD of the source block against its flat intra prediction.
    pub s_intra: f64,
    /// SATD of the best source-to-source inter prediction; equals
    /// s_intra when the frame has no references.
    pub s_inter: f64,
    /// Fraction of the block that inter prediction explains, in [0, 1].
    pub rho: f64,
    pub sides: Vec<MbSide>,
    /// Coded distortion of this block in the flow pass; drives the
    /// quantization-aware variant.
    pub d_rec: f64,
    /// Source-domain prediction error energy from the flow pass.
    pub sigma2_src: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbFrame {
    pub display: usize,
    pub blocks: Vec<MbBlockStats>,
}

/// Backward-accumulated propagation cost per group, both variants.
/// Grid entry 0 is the frame the group hangs from, entries 1.. its
/// members by display.
#[derive(Clone, Debug, PartialEq)]
pub struct MbGroupAccum {
    pub group: usize,
    pub first_display: usize,
    pub c_plain: Vec<Vec<f64>>,
    pub c_quant: Vec<Vec<f64>>,
    pub diagnostics: SynthDiagnostics,
}

impl MbGroupAccum {
    pub fn costs(&self, display: usize, variant: MbVariant) -> Option<&[f64]> {
        let rows = match variant {
            MbVariant::Plain => &self.c_plain,
            MbVariant::Quant => &self.c_quant,
        };
        display
            .checked_sub(self.first_display)
            .and_then(|i| rows.get(i))
            .map(|v| v.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbTreeOutput {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub frames: Vec<MbFrame>,
    pub groups: Vec<MbGroupAccum>,
}

impl MbTreeOutput {
    /// The cost row that speaks for a frame's own downstream impact,
    /// mirroring the dependency model's canonical grid rule.
    pub fn canonical_costs(
        &self,
        plan: &SequencePlan,
        display: usize,
        variant: MbVariant,
    ) -> &[f64] {
        let g = if display == 0 { 0 } else { (display - 1) / plan.gop_length };
        self.groups[g]
            .costs(display, variant)
            .expect("member display within its own group")
    }
}

/// Share of a block that intra coding would pay but inter prediction
/// covers. Zero for a block with no intra cost at all.
pub fn mbtree_rho(s_intra: f64, s_inter: f64) -> f64 {
    if s_intra <= 0.0 {
        0.0
    } else {
        ((s_intra - s_inter) / s_intra).clamp(0.0, 1.0)
    }
}

/// Cost handed to a reference: the inter-covered share of this block's
/// intra cost plus of everything already accumulated on it.
pub fn mbtree_propagate(c_cur: f64, s_intra: f64, rho: f64) -> f64 {
    rho * (s_intra + c_cur)
}

/// Quantization-aware hop: scales the handover by the fraction of the
/// prediction error the quantizer keeps. A coarse quantizer keeps all
/// of it (factor saturates at 1); a lossless block keeps none.
pub fn mbtree_quant_propagate(
    c_cur: f64,
    s_intra: f64,
    rho: f64,
    d_rec: f64,
    sigma2_src: f64,
) -> f64 {
    let keep = if sigma2_src <= 0.0 {
        1.0
    } else {
        (d_rec / sigma2_src).clamp(0.0, 1.0)
    };
    keep * mbtree_propagate(c_cur, s_intra, rho)
}

/// Frame-level propagation factor: accumulated cost over intra cost.
pub fn beta_mb_frame(costs: &[f64], blocks: &[MbBlockStats]) -> Result<f64> {
    let num: f64 = costs.iter().sum();
    let den: f64 = blocks.iter().map(|b| b.s_intra).sum();
    if den <= 0.0 {
        return Err(Error::ZeroDenominator("frame intra cost"));
    }
    Ok(num / den)
}

struct MbCandidate {
    satd: u64,
    sides: Vec<MbSide>,
}

/// Runs the whole lookahead: SATD statistics per block against source
/// frames only, then per-group backward accumulation. `flow` supplies
/// the measured coding numbers the quantization-aware variant scales
/// by; its pass must cover the same planned sequence.
pub fn mbtree_pass(
    seq: &Sequence,
    plan: &SequencePlan,
    cfg: &CodecConfig,
    flow: &FlowOutput,
) -> Result<MbTreeOutput> {
    cfg.validate()?;
    plan.validate()?;
    if plan.frames.len() != seq.frames.len() {
        return Err(Error::Config(format!(
            "plan covers {} frames, sequence has {}",
            plan.frames.len(),
            seq.frames.len()
        )));
    }
    if flow.frames.len() != seq.frames.len() {
        return Err(Error::Config(format!(
            "flow pass covers {} frames, sequence has {}",
            flow.frames.len(),
            seq.frames.len()
        )));
    }
    let blocks_w = seq.frames[0].blocks_w();
    let blocks_h = seq.frames[0].blocks_h();
    let mut frames: Vec<Option<MbFrame>> = vec![None; seq.frames.len()];
    for fp in &plan.frames {
        let cur = &seq.frames[fp.display];
        let mut blocks = Vec::with_capacity(blocks_w * blocks_h);
        for by in 0..blocks_h {
            for bx in 0..blocks_w {
                let (x, y) = (bx * BLOCK, by * BLOCK);
                let cur_block = cur.block(x, y);
                let intra_pred = predict_intra_dc(cur, x, y);
                let s_intra = satd(&cur_block, &intra_pred)? as f64;

                let mut best: Option<MbCandidate> = None;
                let mut singles: Vec<(Mv, usize, [u8; BLOCK * BLOCK])> =
                    Vec::with_capacity(fp.refs.len());
                for &r in &fp.refs {
                    let src_ref = &seq.frames[r];
                    let sr = motion_search(&cur_block, x, y, src_ref, Mv::default(), cfg.search_range);
                    let pred = predict_inter(src_ref, x, y, sr.mv);
                    let cand = MbCandidate {
                        satd: satd(&cur_block, &pred)?,
                        sides: vec![MbSide { ref_display: r, mv: sr.mv }],
                    };
                    singles.push((sr.mv, r, pred));
                    if best.as_ref().map_or(true, |b| cand.satd < b.satd) {
                        best = Some(cand);
                    }
                }
                if let [(mv0, r0, p0), (mv1, r1, p1)] = singles.as_slice() {
                    let avg = predict_average(p0, p1);
                    let cand = MbCandidate {
                        satd: satd(&cur_block, &avg)?,
                        sides: vec![
                            MbSide { ref_display: *r0, mv: *mv0 },
                            MbSide { ref_display: *r1, mv: *mv1 },
                        ],
                    };
                    if best.as_ref().map_or(true, |b| cand.satd < b.satd) {
                        best = Some(cand);
                    }
                }

                let flow_block = &flow.frames[fp.display].blocks[by * blocks_w + bx];
                let (s_inter, sides) = match best {
                    Some(b) => (b.satd as f64, b.sides),
                    None => (s_intra, Vec::new()),
                };
                blocks.push(MbBlockStats {
                    bx,
                    by,
                    s_intra,
                    s_inter,
                    rho: mbtree_rho(s_intra, s_inter),
                    sides,
                    d_rec: flow_block.d_rec,
                    sigma2_src: flow_block.sigma2_src,
                });
            }
        }
        frames[fp.display] = Some(MbFrame { display: fp.display, blocks });
    }
    let frames: Vec<MbFrame> = frames.into_iter().map(|f| f.unwrap()).collect();

    let cells_per_frame = blocks_w * blocks_h;
    let mut groups = Vec::with_capacity(plan.group_count());
    for group in 0..plan.group_count() {
        let seg = plan.segment(group);
        let first_display = seg.anchor_display;
        let mut c_plain = vec![vec![0.0f64; cells_per_frame]; plan.gop_length + 1];
        let mut c_quant = vec![vec![0.0f64; cells_per_frame]; plan.gop_length + 1];
        let mut diag = SynthDiagnostics::default();
        for fp in seg.frames.iter().rev() {
            let row = &frames[fp.display];
            for (i, b) in row.blocks.iter().enumerate() {
                if b.sides.is_empty() || b.rho == 0.0 {
                    continue;
                }
                let contrib_plain =
                    mbtree_propagate(c_plain[fp.display - first_display][i], b.s_intra, b.rho);
                let contrib_quant = mbtree_quant_propagate(
                    c_quant[fp.display - first_display][i],
                    b.s_intra,
                    b.rho,
                    b.d_rec,
                    b.sigma2_src,
                );
                if contrib_plain == 0.0 && contrib_quant == 0.0 {
                    continue;
                }
                let x = (b.bx * BLOCK) as i64;
                let y = (b.by * BLOCK) as i64;
                for side in &b.sides {
                    if side.ref_display < first_display
                        || side.ref_display > first_display + plan.gop_length
                    {
                        diag.dropped_contributions += 1;
                        continue;
                    }
                    let cells = overlap_cells(
                        x + side.mv.x as i64,
                        y + side.mv.y as i64,
                        blocks_w,
                        blocks_h,
                    );
                    if cells.is_empty() {
                        diag.dropped_contributions += 1;
                        continue;
                    }
                    // Both variants ride the same motion topology.
                    let idx = side.ref_display - first_display;
                    let mut placed_plain = 0.0;
                    let mut placed_quant = 0.0;
                    for cell in &cells {
                        let j = cell.gy * blocks_w + cell.gx;
                        let p = contrib_plain * cell.weight;
                        let q = contrib_quant * cell.weight;
                        c_plain[idx][j] += p;
                        c_quant[idx][j] += q;
                        placed_plain += p;
                        placed_quant += q;
                    }
                    diag.max_conservation_error = diag
                        .max_conservation_error
                        .max((placed_plain - contrib_plain).abs())
                        .max((placed_quant - contrib_quant).abs());
                }
            }
        }
        groups.push(MbGroupAccum { group, first_display, c_plain, c_quant, diagnostics: diag });
    }
    Ok(MbTreeOutput { blocks_w, blocks_h, frames, groups })
}

pub const DUMP_HEADER: [&str; 12] = [
    "frame", "block_x", "block_y", "mode", "ref0", "mv0x", "mv0y", "s_intra", "s_inter", "rho",
    "acc_c", "acc_c_quant",
];

pub fn dump_rows(out: &MbTreeOutput, plan: &SequencePlan) -> Vec<Vec<Cell>> {
    let mut rows = Vec::new();
    for frame in &out.frames {
        let plain = out.canonical_costs(plan, frame.display, MbVariant::Plain);
        let quant = out.canonical_costs(plan, frame.display, MbVariant::Quant);
        for (i, b) in frame.blocks.iter().enumerate() {
            let mode = match b.sides.len() {
                0 => "intra",
                1 => "single",
                _ => "compound",
            };
            let (ref0, mv) = match b.sides.first() {
                Some(s) => (s.ref_display as i64, s.mv),
                None => (-1, Mv::default()),
            };
            rows.push(vec![
                Cell::from(frame.display),
                Cell::from(b.bx),
                Cell::from(b.by),
                Cell::from(mode),
                Cell::from(ref0),
                Cell::from(mv.x as i64),
                Cell::from(mv.y as i64),
                Cell::from(b.s_intra),
                Cell::from(b.s_inter),
                Cell::from(b.rho),
                Cell::from(plain[i]),
                Cell::from(quant[i]),
            ]);
        }
    }
    rows
}
