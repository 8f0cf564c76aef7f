//! Adapter compression against seeded, subspace-aligned basis pools.
//!
//! A low-rank update `delta W = B A` is projected into the singular bases of
//! its frozen weight `W`, each factor is fitted by a sparse combination of
//! basis matrices regenerable from one seed, and only the kept coefficients
//! and their indices are stored.

pub mod analysis;
pub mod basis;
pub mod bench;
pub mod cli;
pub mod error;
pub mod format;
pub mod linalg;
pub mod pipeline;
pub mod quant;

pub use error::{Error, Result};
