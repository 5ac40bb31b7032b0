// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gmrf;
pub mod graph;
pub mod regression;
pub mod rng;
pub mod theory;
pub mod wavelet;

pub use error::{Error, Result};
