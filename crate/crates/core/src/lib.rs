//! Multi-term time-fractional diffusion in one space dimension.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Oracle constants
// keep the digits they were published with.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod asymptotics;
pub mod error;
pub mod forward;
pub mod fractional;
pub mod inverse;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
