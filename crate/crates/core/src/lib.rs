//! Symbolic regression with a decoder-only expression generator.
//!
//! The generator grows expression trees breadth-first, encodes each node's
//! depth and horizontal position, and mixes node embeddings with attention
//! computed on a low-passed DCT of the sequence. Sampled expressions get
//! their constants fitted by Levenberg–Marquardt, are scored with a BIC
//! reward, and the generator is updated with a rank-weighted, clipped
//! risk-seeking policy gradient with a KL penalty to a reference snapshot.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actor;
pub mod bench;
pub mod const_opt;
pub mod error;
pub mod expr;
pub mod policy;
pub mod rewards;
pub mod sampler;

pub use error::{Error, Result};
