//! The toy codec: configuration, scalar quantization, and the
//! block/frame/sequence coding loop used by every experiment.

pub mod dct;
pub mod dist;
pub mod entropy;

mod block;
mod encode;
mod motion;
mod plan;
mod predict;

pub use block::{code_block, CodedBlock};
pub use encode::{encode_planned, encode_sequence, EncodeReport, FrameStats};
pub use motion::{motion_search, SearchResult};
pub use plan::{build_sequence_plan, FramePlan, SegmentRef, SequencePlan};
pub use predict::{predict_average, predict_inter, predict_intra_dc};

use crate::{Error, Result};

/// Integer-pel motion vector; positive x points right, positive y
/// points down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Mv {
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GopMode {
    /// Every frame predicts from the previous display frame.
    LowDelay,
    /// Dyadic hierarchy; the last display frame of each group is coded
    /// first and anchors the next group.
    Pyramid,
}

#[derive(Clone, Copy, Debug)]
pub struct CodecConfig {
    /// Quantizer step of the leaf layer.
    pub base_qstep: f64,
    /// Frames per group; a power of two up to 16.
    pub gop_length: usize,
    pub gop_mode: GopMode,
    /// Motion search window radius in pels.
    pub search_range: i32,
    /// Per-level multiplier on the quantizer step; each layer below the
    /// leaves runs this much finer.
    pub level_qstep_scale: f64,
    /// lambda = lambda_coeff * qstep^2.
    pub lambda_coeff: f64,
}

impl CodecConfig {
    pub fn new(base_qstep: f64) -> CodecConfig {
        CodecConfig {
            base_qstep,
            gop_length: 16,
            gop_mode: GopMode::Pyramid,
            search_range: 16,
            level_qstep_scale: std::f64::consts::FRAC_1_SQRT_2,
            lambda_coeff: 0.85,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_qstep.is_finite() && self.base_qstep > 0.0) {
            return Err(Error::Config(format!("base_qstep {} must be positive", self.base_qstep)));
        }
        if !matches!(self.gop_length, 1 | 2 | 4 | 8 | 16) {
            return Err(Error::Config(format!(
                "gop_length {} must be a power of two up to 16",
                self.gop_length
            )));
        }
        if !(1..=64).contains(&self.search_range) {
            return Err(Error::Config(format!("search_range {} out of range", self.search_range)));
        }
        if !(self.level_qstep_scale > 0.0 && self.level_qstep_scale <= 1.0) {
            return Err(Error::Config(format!(
                "level_qstep_scale {} must be in (0, 1]",
                self.level_qstep_scale
            )));
        }
        if !(self.lambda_coeff.is_finite() && self.lambda_coeff > 0.0) {
            return Err(Error::Config(format!(
                "lambda_coeff {} must be positive",
                self.lambda_coeff
            )));
        }
        Ok(())
    }

    /// Frame-level Lagrange multiplier for a quantizer step.
    pub fn lambda(&self, qstep: f64) -> f64 {
        self.lambda_coeff * qstep * qstep
    }
}

/// Uniform scalar quantizer, round to nearest, ties away from zero.
pub fn quantize(coeff: f64, qstep: f64) -> i32 {
    debug_assert!(qstep > 0.0);
    (coeff / qstep).round() as i32
}

pub fn dequantize(level: i32, qstep: f64) -> f64 {
    level as f64 * qstep
}

/// Peak signal-to-noise ratio of 8-bit content for a mean squared
/// error, capped at 100 dB (the lossless sentinel).
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return 100.0;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(100.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdCost {
    pub rate: f64,
    pub distortion: f64,
}

impl RdCost {
    pub fn cost(&self, lambda: f64) -> f64 {
        self.distortion + lambda * self.rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantizer_rounds_to_nearest_ties_away() {
        assert_eq!(quantize(17.0, 8.0), 2);
        assert_eq!(quantize(-17.0, 8.0), -2);
        assert_eq!(quantize(12.0, 8.0), 2);
        assert_eq!(quantize(-12.0, 8.0), -2);
        assert_eq!(quantize(4.0, 8.0), 1);
        assert_eq!(quantize(3.999, 8.0), 0);
        assert_eq!(dequantize(2, 8.0), 16.0);
    }

    #[test]
    fn psnr_reference_points() {
        assert_eq!(psnr(65025.0), 0.0);
        assert!((psnr(6.5025) - 40.0).abs() < 1e-12);
        assert_eq!(psnr(0.0), 100.0);
        assert_eq!(psnr(1e-30), 100.0);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        assert!(CodecConfig::new(16.0).validate().is_ok());
        assert!(CodecConfig::new(0.0).validate().is_err());
        let mut c = CodecConfig::new(16.0);
        c.gop_length = 3;
        assert!(c.validate().is_err());
        let mut c = CodecConfig::new(16.0);
        c.level_qstep_scale = 1.5;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn quantizer_error_is_bounded_by_half_step(
            coeff in -5000.0f64..5000.0,
            qstep in 0.1f64..100.0,
        ) {
            let err = (dequantize(quantize(coeff, qstep), qstep) - coeff).abs();
            prop_assert!(err <= qstep / 2.0 + 1e-9);
        }
    }
}
