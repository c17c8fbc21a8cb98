//! Finite-sample certificates for M-estimators: contraction and Newton-step
//! root brackets, GLM and Cox expansions, nonlinear least squares, equality
//! constrained fits, and certified resampling.

// `!(x >= 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod cli;
pub mod constrained;
pub mod cox;
pub mod error;
pub mod glm;
pub mod losses;
pub mod nls;
pub mod numkit;
pub mod resample;

pub use error::{Error, Result};
pub use numkit::{DenseMatrix, Vector};
