//! Ising models on preferential attachment graphs and their local limit.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bp;
pub mod critical;
pub mod error;
pub mod exact;
pub mod graph;
pub mod ising;
pub mod mcmc;
pub mod ppt;
pub mod rde;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// Format a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}
