// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Provider profiling against an individualized empirical null.
//!
//! Center-level observed/expected statistics are turned into fixed-effects
//! Z-scores, corrected for overdispersion that grows linearly with effective
//! center size, and combined into a correlation-weighted composite score.
//! The [`simulation`] module reproduces the flagging-probability studies that
//! motivate the correction.

pub mod baselines;
pub mod composite;
pub mod empirical_null;
pub mod error;
pub mod io;
pub mod measures;
pub mod numerics;
pub mod simulation;

pub use error::{Error, Result};
