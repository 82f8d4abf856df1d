//! Distributed second-order-cone optimal power flow solved by dual
//! decomposition with a differentially private projected subgradient
//! method, plus the load-inference adversary used to evaluate it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod attack;
pub mod error;
pub mod experiment;
pub mod model;
pub mod network;
pub mod partition;
pub mod privacy;
pub mod solver;

pub use error::{Error, Result};
