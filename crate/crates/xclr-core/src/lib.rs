//! Contrastive learning against soft similarity graphs, at desk scale.
//!
//! The crate is organized bottom-up: dense [`numerics`], similarity
//! [`graph`] construction and soft targets, graph-weighted contrastive
//! [`losses`] with analytic gradients, a manual-backprop MLP [`encoder`],
//! [`synth`]etic data generation, and representation [`eval`] protocols.
//!
//! Everything is deterministic given explicit seeds, uses `f64` throughout,
//! and requires only `alloc`.

#![no_std]
#![forbid(unsafe_code)]
// Index loops mirror the j-of-row-i structure of the math.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
