//! Distributed differential dynamic programming for multi-agent trajectory
//! optimization.

// Bounds are checked as `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod al;
pub mod central;
pub mod constraints;
pub mod cost;
pub mod ddp;
pub mod dynamics;
pub mod error;
pub mod md;
pub mod nd;
pub mod network;
pub mod parallel;
pub mod problem;
pub mod projection;
pub mod qp;
pub mod scenario;

pub use error::{Error, Result};
