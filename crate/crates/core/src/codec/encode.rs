//! The encoding loop: per-block mode decision under a Lagrange
//! multiplier map, frame by frame in coding order.

use std::collections::BTreeMap;

use super::block::{code_block, CodedBlock};
use super::motion::motion_search;
use super::plan::{build_sequence_plan, FramePlan, SequencePlan};
use super::predict::{predict_average, predict_inter, predict_intra_dc};
use super::{psnr, CodecConfig, Mv};
use crate::lambda::LambdaMap;
use crate::media::{Frame, Sequence, BLOCK};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub display: usize,
    pub coding_order: usize,
    pub level: u32,
    pub qstep: f64,
    pub rate_bits: u64,
    /// Coding SSE over the padded frame.
    pub sse: u64,
    /// SSE over the pre-padding region, the PSNR domain.
    pub sse_orig: u64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeReport {
    /// Per-frame stats in display order.
    pub frames: Vec<FrameStats>,
    pub total_rate_bits: u64,
    /// Total coding SSE over padded frames.
    pub total_sse: f64,
    pub recon: Sequence,
}

impl EncodeReport {
    pub fn kbps(&self, frame_rate: f64) -> f64 {
        self.total_rate_bits as f64 * frame_rate / self.frames.len() as f64 / 1000.0
    }

    /// PSNR of the whole reconstruction over the pre-padding region.
    pub fn sequence_psnr(&self) -> f64 {
        let f = &self.recon.frames[0];
        let samples = (f.orig_width * f.orig_height * self.frames.len()) as f64;
        let total: f64 = self.frames.iter().map(|s| s.sse_orig as f64).sum();
        psnr(total / samples)
    }
}

fn better(candidate: f64, incumbent: Option<f64>) -> bool {
    match incumbent {
        None => true,
        Some(best) => candidate < best,
    }
}

/// Codes one frame against its planned references. Returns the
/// reconstruction with the bit and SSE totals.
fn encode_frame(
    cur: &Frame,
    fp: &FramePlan,
    refs: &[&Frame],
    cfg: &CodecConfig,
    map: Option<&LambdaMap>,
) -> Result<(Frame, u64, u64)> {
    let mut recon = Frame::blank_like(cur);
    let lambda_frame = cfg.lambda(fp.qstep);
    let mut rate_bits = 0u64;
    let mut sse = 0u64;
    for by in 0..cur.blocks_h() {
        for bx in 0..cur.blocks_w() {
            let (x, y) = (bx * BLOCK, by * BLOCK);
            let cur_block = cur.block(x, y);
            let lambda = match map {
                Some(m) => m.lambda_at(bx, by)?,
                None => lambda_frame,
            };

            let mut best: Option<(f64, CodedBlock)> = None;
            let consider = |coded: CodedBlock, best: &mut Option<(f64, CodedBlock)>| {
                let cost = coded.cost(lambda);
                if better(cost, best.as_ref().map(|(c, _)| *c)) {
                    *best = Some((cost, coded));
                }
            };

            // Candidate order is part of the bitstream determinism:
            // intra, then each single reference, then compound.
            let intra_pred = predict_intra_dc(&recon, x, y);
            consider(code_block(&cur_block, &intra_pred, fp.qstep, &[]), &mut best);

            let mut singles: Vec<(Mv, [u8; BLOCK * BLOCK])> = Vec::with_capacity(refs.len());
            for reference in refs {
                let sr = motion_search(&cur_block, x, y, reference, Mv::default(), cfg.search_range);
                let pred = predict_inter(reference, x, y, sr.mv);
                consider(code_block(&cur_block, &pred, fp.qstep, &[sr.mv]), &mut best);
                singles.push((sr.mv, pred));
            }
            if let [(mv0, p0), (mv1, p1)] = singles.as_slice() {
                let pred = predict_average(p0, p1);
                consider(code_block(&cur_block, &pred, fp.qstep, &[*mv0, *mv1]), &mut best);
            }

            let (_, coded) = best.expect("at least the intra candidate exists");
            recon.set_block(x, y, &coded.recon);
            rate_bits += coded.bits;
            sse += coded.distortion;
        }
    }
    Ok((recon, rate_bits, sse))
}

fn orig_region_sse(a: &Frame, b: &Frame) -> u64 {
    let mut total = 0u64;
    for y in 0..a.orig_height {
        for x in 0..a.orig_width {
            let d = a.sample(x, y) as i64 - b.sample(x, y) as i64;
            total += (d * d) as u64;
        }
    }
    total
}

/// Encodes a sequence under an existing plan. `maps` supplies optional
/// per-frame Lagrange multiplier maps keyed by display index; frames
/// without a map use the uniform frame-level multiplier.
pub fn encode_planned(
    seq: &Sequence,
    cfg: &CodecConfig,
    plan: &SequencePlan,
    maps: Option<&BTreeMap<usize, LambdaMap>>,
) -> Result<EncodeReport> {
    cfg.validate()?;
    plan.validate()?;
    if plan.frames.len() != seq.frames.len() {
        return Err(Error::Config(format!(
            "plan covers {} frames, sequence has {}",
            plan.frames.len(),
            seq.frames.len()
        )));
    }
    let n = seq.frames.len();
    let mut recon_bank: Vec<Option<Frame>> = vec![None; n];
    let mut stats: Vec<Option<FrameStats>> = vec![None; n];
    for fp in &plan.frames {
        let cur = &seq.frames[fp.display];
        let mut refs: Vec<&Frame> = Vec::with_capacity(fp.refs.len());
        for &r in &fp.refs {
            refs.push(recon_bank[r].as_ref().ok_or_else(|| {
                Error::Config(format!("frame {} referenced before coding", r))
            })?);
        }
        let map = maps.and_then(|m| m.get(&fp.display));
        let (recon, rate_bits, sse) = encode_frame(cur, fp, &refs, cfg, map)?;
        let sse_orig = orig_region_sse(cur, &recon);
        let mse = sse_orig as f64 / (cur.orig_width * cur.orig_height) as f64;
        stats[fp.display] = Some(FrameStats {
            display: fp.display,
            coding_order: fp.coding_order,
            level: fp.level,
            qstep: fp.qstep,
            rate_bits,
            sse,
            sse_orig,
            psnr: psnr(mse),
        });
        recon_bank[fp.display] = Some(recon);
    }
    let frames: Vec<FrameStats> = stats.into_iter().map(|s| s.unwrap()).collect();
    let total_rate_bits = frames.iter().map(|f| f.rate_bits).sum();
    let total_sse = frames.iter().map(|f| f.sse as f64).sum();
    let recon = Sequence {
        frames: recon_bank.into_iter().map(|f| f.unwrap()).collect(),
        frame_rate: seq.frame_rate,
    };
    Ok(EncodeReport { frames, total_rate_bits, total_sse, recon })
}

/// Plans and encodes a sequence in one step.
pub fn encode_sequence(
    seq: &Sequence,
    cfg: &CodecConfig,
    maps: Option<&BTreeMap<usize, LambdaMap>>,
) -> Result<EncodeReport> {
    let plan = build_sequence_plan(seq.frames.len(), cfg)?;
    encode_planned(seq, cfg, &plan, maps)
}
