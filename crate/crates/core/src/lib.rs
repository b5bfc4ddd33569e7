// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod flow;
pub mod fno;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod rollout;

pub use error::{Error, Result};
