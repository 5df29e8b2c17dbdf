//! Group-of-pictures structure: coding order, pyramid levels, per-frame
//! quantizer steps, and reference assignments.

use super::{CodecConfig, GopMode};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct FramePlan {
    pub display: usize,
    pub coding_order: usize,
    /// 0 is the lowest layer (the long-term reference of its group);
    /// the maximum level holds the leaf frames.
    pub level: u32,
    pub qstep: f64,
    /// Reference frames by display index, at most two.
    pub refs: Vec<usize>,
    pub is_leaf: bool,
    pub is_intra: bool,
}

#[derive(Clone, Debug)]
pub struct SequencePlan {
    /// All frames in coding order; index 0 is the intra anchor.
    pub frames: Vec<FramePlan>,
    pub gop_length: usize,
    /// coding order indexed by display index.
    order_of_display: Vec<usize>,
}

/// One group plus the already-coded frame it hangs from.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRef<'a> {
    pub anchor_display: usize,
    /// The group's frames in coding order (anchor not included).
    pub frames: &'a [FramePlan],
}

impl SequencePlan {
    pub fn group_count(&self) -> usize {
        (self.frames.len() - 1) / self.gop_length
    }

    pub fn segment(&self, group: usize) -> SegmentRef<'_> {
        let l = self.gop_length;
        SegmentRef {
            anchor_display: group * l,
            frames: &self.frames[1 + group * l..1 + (group + 1) * l],
        }
    }

    pub fn by_display(&self, display: usize) -> &FramePlan {
        &self.frames[self.order_of_display[display]]
    }

    pub fn by_display_mut(&mut self, display: usize) -> &mut FramePlan {
        &mut self.frames[self.order_of_display[display]]
    }

    /// Quantizer step of the leaf layer.
    pub fn leaf_qstep(&self) -> f64 {
        self.frames
            .iter()
            .find(|f| f.is_leaf)
            .map(|f| f.qstep)
            .unwrap_or(self.frames[0].qstep)
    }

    /// Structural soundness: every reference is coded before its user,
    /// reference lists are short, and only the anchor is intra.
    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            if f.refs.len() > 2 {
                return Err(Error::Config(format!(
                    "frame {} has {} references",
                    f.display,
                    f.refs.len()
                )));
            }
            if f.is_intra != f.refs.is_empty() {
                return Err(Error::Config(format!(
                    "frame {} intra flag disagrees with its reference list",
                    f.display
                )));
            }
            for &r in &f.refs {
                if self.order_of_display[r] >= f.coding_order {
                    return Err(Error::Config(format!(
                        "frame {} references frame {} which is not yet coded",
                        f.display, r
                    )));
                }
            }
        }
        Ok(())
    }
}

fn push_pyramid(
    frames: &mut Vec<FramePlan>,
    lo: usize,
    hi: usize,
    level: u32,
    leaf_depth: u32,
    cfg: &CodecConfig,
) {
    if hi - lo < 2 {
        return;
    }
    let mid = (lo + hi) / 2;
    frames.push(FramePlan {
        display: mid,
        coding_order: 0,
        level,
        qstep: level_qstep(cfg, leaf_depth, level),
        refs: vec![lo, hi],
        is_leaf: level == leaf_depth,
        is_intra: false,
    });
    push_pyramid(frames, lo, mid, level + 1, leaf_depth, cfg);
    push_pyramid(frames, mid, hi, level + 1, leaf_depth, cfg);
}

fn level_qstep(cfg: &CodecConfig, leaf_depth: u32, level: u32) -> f64 {
    cfg.base_qstep * cfg.level_qstep_scale.powi((leaf_depth - level) as i32)
}

/// Lays out `frame_count` frames (one intra anchor plus whole groups)
/// under the configured group structure.
pub fn build_sequence_plan(frame_count: usize, cfg: &CodecConfig) -> Result<SequencePlan> {
    cfg.validate()?;
    let l = cfg.gop_length;
    if frame_count == 0 || (frame_count - 1) % l != 0 {
        return Err(Error::Config(format!(
            "{frame_count} frames do not form an anchor plus whole groups of {l}"
        )));
    }
    let leaf_depth = match cfg.gop_mode {
        GopMode::Pyramid => l.trailing_zeros(),
        GopMode::LowDelay => (l > 1) as u32,
    };
    let mut frames = Vec::with_capacity(frame_count);
    frames.push(FramePlan {
        display: 0,
        coding_order: 0,
        level: 0,
        qstep: level_qstep(cfg, leaf_depth, 0),
        refs: Vec::new(),
        is_leaf: leaf_depth == 0,
        is_intra: true,
    });
    let groups = (frame_count - 1) / l;
    for g in 0..groups {
        let anchor = g * l;
        match cfg.gop_mode {
            GopMode::Pyramid => {
                frames.push(FramePlan {
                    display: anchor + l,
                    coding_order: 0,
                    level: 0,
                    qstep: level_qstep(cfg, leaf_depth, 0),
                    refs: vec![anchor],
                    is_leaf: leaf_depth == 0,
                    is_intra: false,
                });
                push_pyramid(&mut frames, anchor, anchor + l, 1, leaf_depth, cfg);
            }
            GopMode::LowDelay => {
                for d in anchor + 1..=anchor + l {
                    let level = if d == anchor + 1 { 0 } else { leaf_depth };
                    frames.push(FramePlan {
                        display: d,
                        coding_order: 0,
                        level,
                        qstep: level_qstep(cfg, leaf_depth, level),
                        refs: vec![d - 1],
                        is_leaf: level == leaf_depth,
                        is_intra: false,
                    });
                }
            }
        }
    }
    let mut order_of_display = vec![0; frame_count];
    for (order, f) in frames.iter_mut().enumerate() {
        f.coding_order = order;
        order_of_display[f.display] = order;
    }
    let plan = SequencePlan { frames, gop_length: l, order_of_display };
    plan.validate()?;
    Ok(plan)
}
