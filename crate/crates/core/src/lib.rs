//! Hybrid graph outlier exposure for unsupervised graph-level
//! out-of-distribution detection.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! the graph model, structural embeddings and subgrouping, graphon
//! estimation and mixup, outlier synthesis, the one-class scorer with its
//! boundary-aware outlier-exposure loss, and evaluation metrics. File formats,
//! experiment orchestration and the command-line tool live in the `hgoe`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod detector;
pub mod embed;
pub mod error;
pub mod graph;
pub mod graphon;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
