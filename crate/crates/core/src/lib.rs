//! Robust distribution network reconfiguration with decision-dependent
//! renewable uncertainty.

// `!(a > b)` on floats is deliberate throughout: it also catches NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod benders;
pub mod cases;
pub mod ccg;
pub mod engine;
pub mod error;
pub mod formulation;
pub mod network;
pub mod oracle;
pub mod polytope;
pub mod sensitivity;
pub mod sparse;

pub use error::{Error, Result};
