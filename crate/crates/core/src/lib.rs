//! Weighted averaging of bounded sequences.
// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod calculus;
pub mod catalog;
pub mod cli;
pub mod constructions;
pub mod ergodic;
pub mod error;
pub mod numerics;
pub mod pattern;
pub mod toeplitz;
pub mod weights;

pub use error::{Error, Result};
