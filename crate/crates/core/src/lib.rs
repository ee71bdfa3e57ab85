//! Certainty-equivalence-free adaptive LQ control under database poisoning.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod attack;
pub mod controller;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod lqr;
pub mod ofu;
pub mod sim;

pub use error::{Error, Result};
