// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod polar;
pub mod serde_mat;
pub mod state;
pub mod step;
pub mod baselines;
pub mod kl_analysis;
pub mod harness;
