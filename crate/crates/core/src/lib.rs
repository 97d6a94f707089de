//! Design-based small area estimation.
//!
//! Direct (Hájek, GREG) and synthetic (regression-synthetic, GREG-synthetic)
//! domain estimators, generalized variance function smoothing, rescaling
//! bootstrap variances, linear compositions with the two-step weight
//! procedure and its MSE estimator, a Fay–Herriot EBLUP benchmark, and a
//! Monte-Carlo harness that evaluates all of them on repeated samples.

// NaN must fail these comparisons; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod composition;
pub mod direct;
pub mod error;
pub mod fh;
pub mod flags;
pub mod gvf;
pub mod harness;
pub mod linalg;
pub mod pipeline;
pub mod population;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Result};
pub use flags::Flags;
