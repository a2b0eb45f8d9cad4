//! File formats, the synthetic benchmark, the experiment runner and the CLI
//! for `hgoe-core`.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod io;

pub use error::{Error, Result};
