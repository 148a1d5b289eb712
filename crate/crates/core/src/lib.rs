//! Separable nonlinear least squares by variable projection.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod reduced;
pub mod verify;

pub use error::{Error, Result};
