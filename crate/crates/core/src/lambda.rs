//! Rate-control hook: turns accumulated dependency totals into a
//! per-region Lagrangian multiplier. Regions are 32x32 groups of four
//! 16x16 blocks. A region whose downstream impact exceeds the frame
//! average gets a smaller multiplier (spend bits where they pay off
//! later); one below average gets a larger one; the frame-average
//! region is left untouched, which keeps a uniformly weighted frame
//! bit-identical to the unscaled encoder.

use std::collections::BTreeMap;

use crate::codec::{CodecConfig, SequencePlan};
use crate::csv::Cell;
use crate::mbtree::{MbTreeOutput, MbVariant};
use crate::tpl::{canonical_grid, TplAnalysis};
use crate::{Error, Result};

/// Multipliers for one frame, one entry per 32x32 region.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMap {
    pub display: usize,
    pub lcbs_w: usize,
    pub lcbs_h: usize,
    /// The frame's unscaled multiplier.
    pub lambda_n: f64,
    pub alpha_fr: f64,
    pub alpha_m: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Regions with no measurable weight, pinned to the frame average.
    pub neutral_fallbacks: u64,
}

impl LambdaMap {
    /// A map that changes nothing: every region at the frame average.
    pub fn uniform(display: usize, blocks_w: usize, blocks_h: usize, lambda_n: f64) -> LambdaMap {
        let lcbs_w = blocks_w.div_ceil(2);
        let lcbs_h = blocks_h.div_ceil(2);
        LambdaMap {
            display,
            lcbs_w,
            lcbs_h,
            lambda_n,
            alpha_fr: 0.0,
            alpha_m: vec![0.0; lcbs_w * lcbs_h],
            lambda: vec![lambda_n; lcbs_w * lcbs_h],
            neutral_fallbacks: 0,
        }
    }

    /// Multiplier for the 16x16 block at block coordinates (bx, by).
    pub fn lambda_at(&self, bx: usize, by: usize) -> Result<f64> {
        let (lx, ly) = (bx / 2, by / 2);
        if lx >= self.lcbs_w || ly >= self.lcbs_h {
            return Err(Error::Config(format!(
                "block ({bx}, {by}) outside the multiplier map of frame {}",
                self.display
            )));
        }
        Ok(self.lambda[ly * self.lcbs_w + lx])
    }
}

/// Region multiplier from the frame-average and region dependency
/// weights. Exact identity when the two coincide; otherwise scaled by
/// (1 + frame) / (1 + region) and kept within a factor of 8 of the
/// unscaled value.
pub fn scale_lambda(lambda_n: f64, alpha_fr: f64, alpha_m: f64) -> f64 {
    if alpha_m == alpha_fr {
        return lambda_n;
    }
    (lambda_n * (1.0 + alpha_fr) / (1.0 + alpha_m)).clamp(lambda_n / 8.0, 8.0 * lambda_n)
}

/// Dependency weight of a single block under the flow model: accrued
/// distortion plus rate (charged at the analysis multiplier), relative
/// to the block's own coded distortion. None when the block carries no
/// measurable distortion.
pub fn tpl_block_alpha(
    acc_delta_d: f64,
    acc_delta_r: f64,
    d_rec: f64,
    lambda_tpl: f64,
) -> Option<f64> {
    if d_rec <= 0.0 {
        None
    } else {
        Some((acc_delta_d + lambda_tpl * acc_delta_r) / d_rec)
    }
}

/// Builds one frame's map from per-block weight terms. Regions sum
/// their numerators and denominators separately, so large blocks
/// dominate a region the same way they dominate the frame.
fn map_from_terms(
    display: usize,
    blocks_w: usize,
    blocks_h: usize,
    lambda_n: f64,
    num: &[f64],
    den: &[f64],
) -> LambdaMap {
    let lcbs_w = blocks_w.div_ceil(2);
    let lcbs_h = blocks_h.div_ceil(2);
    let frame_num: f64 = num.iter().sum();
    let frame_den: f64 = den.iter().sum();
    if frame_den <= 0.0 {
        // Nothing measurable in the whole frame: leave it unscaled.
        let mut map = LambdaMap::uniform(display, blocks_w, blocks_h, lambda_n);
        map.neutral_fallbacks = (lcbs_w * lcbs_h) as u64;
        return map;
    }
    let alpha_fr = frame_num / frame_den;
    let mut alpha_m = Vec::with_capacity(lcbs_w * lcbs_h);
    let mut lambda = Vec::with_capacity(lcbs_w * lcbs_h);
    let mut neutral_fallbacks = 0u64;
    for ly in 0..lcbs_h {
        for lx in 0..lcbs_w {
            let mut n = 0.0;
            let mut d = 0.0;
            for by in ly * 2..((ly * 2 + 2).min(blocks_h)) {
                for bx in lx * 2..((lx * 2 + 2).min(blocks_w)) {
                    n += num[by * blocks_w + bx];
                    d += den[by * blocks_w + bx];
                }
            }
            let a = if d <= 0.0 {
                neutral_fallbacks += 1;
                alpha_fr
            } else {
                n / d
            };
            alpha_m.push(a);
            lambda.push(scale_lambda(lambda_n, alpha_fr, a));
        }
    }
    LambdaMap {
        display,
        lcbs_w,
        lcbs_h,
        lambda_n,
        alpha_fr,
        alpha_m,
        lambda,
        neutral_fallbacks,
    }
}

/// Maps for every planned frame, weighted by the dependency flow
/// model. Keyed by display index.
pub fn build_lambda_maps_tpl(
    analysis: &TplAnalysis,
    cfg: &CodecConfig,
) -> Result<BTreeMap<usize, LambdaMap>> {
    let TplAnalysis { plan, flow, groups } = analysis;
    let lambda_tpl = cfg.lambda(plan.leaf_qstep());
    let mut maps = BTreeMap::new();
    for row in &flow.frames {
        let grid = canonical_grid(groups, plan, row.display);
        let num: Vec<f64> = grid
            .acc_delta_d
            .iter()
            .zip(&grid.acc_delta_r)
            .map(|(&d, &r)| d + lambda_tpl * r)
            .collect();
        let den: Vec<f64> = row.blocks.iter().map(|b| b.d_rec).collect();
        let lambda_n = cfg.lambda(plan.by_display(row.display).qstep);
        maps.insert(
            row.display,
            map_from_terms(row.display, flow.blocks_w, flow.blocks_h, lambda_n, &num, &den),
        );
    }
    Ok(maps)
}

/// Maps for every planned frame, weighted by a lookahead variant's
/// accumulated costs over intra cost.
pub fn build_lambda_maps_mbtree(
    out: &MbTreeOutput,
    plan: &SequencePlan,
    cfg: &CodecConfig,
    variant: MbVariant,
) -> Result<BTreeMap<usize, LambdaMap>> {
    let mut maps = BTreeMap::new();
    for frame in &out.frames {
        let num = out.canonical_costs(plan, frame.display, variant).to_vec();
        let den: Vec<f64> = frame.blocks.iter().map(|b| b.s_intra).collect();
        let lambda_n = cfg.lambda(plan.by_display(frame.display).qstep);
        maps.insert(
            frame.display,
            map_from_terms(frame.display, out.blocks_w, out.blocks_h, lambda_n, &num, &den),
        );
    }
    Ok(maps)
}

pub const DUMP_HEADER: [&str; 6] = ["frame", "lcb_x", "lcb_y", "alpha_m", "alpha_fr", "lambda_m"];

pub fn dump_rows(maps: &BTreeMap<usize, LambdaMap>) -> Vec<Vec<Cell>> {
    let mut rows = Vec::new();
    for map in maps.values() {
        for ly in 0..map.lcbs_h {
            for lx in 0..map.lcbs_w {
                let i = ly * map.lcbs_w + lx;
                rows.push(vec![
                    Cell::from(map.display),
                    Cell::from(lx),
                    Cell::from(ly),
                    Cell::from(map.alpha_m[i]),
                    Cell::from(map.alpha_fr),
                    Cell::from(map.lambda[i]),
                ]);
            }
        }
    }
    rows
}
