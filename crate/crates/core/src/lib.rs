#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Distributed convex model fitting by transpose reduction.
//!
//! Unwrapped ADMM splits `y = Dx`, so every x-update is a global
//! least-squares solve against the aggregated Gram matrix `Σ DᵢᵀDᵢ` and every
//! y-update is a separable proximal step on the shard that owns the rows.
//! Consensus ADMM is provided as the comparison baseline.

pub mod bench;
pub mod cluster;
pub mod consensus;
pub mod data;
pub mod error;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod ratecheck;
pub mod record;
pub mod transpose_lasso;
pub mod unwrapped;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
