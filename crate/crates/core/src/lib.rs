//! Bed-exit intent prediction from a single load cell.
//!
//! The pipeline derives four channels from the raw load ([`signal`]), encodes
//! each look-back window as a line-plot image and a recurrence / Markov
//! transition / Gramian angular texture image ([`imaging`]), and classifies
//! the image pair with a dual-stream attention encoder fused by
//! cross-attention ([`model`]). [`synth`] generates labeled episodes and
//! [`metrics`] scores predictions.

pub mod signal;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synth;
