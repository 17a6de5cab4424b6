//! Fractional Brownian fields, their normalization as H → 0, and the
//! multiplicative-chaos measures built from the normalized fields.

// `!(x > 0.0)` is the house idiom for rejecting NaN along with x ≤ 0
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod chaos;
pub mod constants;
pub mod covariance;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod roughvol;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{FgfError, Result};
