//! A small motion-compensated video coding testbed built around a
//! quantitative model of temporal dependency.
//!
//! The codec itself is deliberately plain: 16x16 blocks, an orthonormal
//! DCT, scalar quantization, Exp-Golomb bit counting, exhaustive
//! integer-pel motion search, and one- or two-reference prediction over
//! low-delay or dyadic pyramid groups. On top of it sit three
//! propagation models that estimate how much a frame's coding quality
//! matters to the frames that depend on it:
//!
//! * [`tpl`] tracks the rate and distortion change each block inherits
//!   from its references and propagates those differences backwards
//!   through the prediction chain;
//! * [`mbtree`] propagates intra/inter SATD ratios the way lookahead
//!   tree models in production encoders do, plus a variant that damps
//!   the propagation by the quantization-to-innovation ratio;
//! * [`lambda`] converts either model's output into per-block Lagrange
//!   multiplier scaling for the final encode.
//!
//! [`eval`] closes the loop: it measures ground-truth dependency by
//! perturbing one frame's quantizer and re-encoding, sweeps model
//! accuracy against that observation, and compares the models end to
//! end via BD-rate.

pub mod codec;
pub mod csv;
mod error;
pub mod eval;
pub mod lambda;
pub mod mbtree;
pub mod media;
pub mod tpl;

pub use error::{Error, Result};
