//! Phase retrieval through incrementally-ranked factorizations of a
//! trace-regularized lifted objective.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod certificate;
pub mod dense;
pub mod eigen;
pub mod error;
pub mod image;
pub mod increpr;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
