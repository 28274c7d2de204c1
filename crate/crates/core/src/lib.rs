//! Local-polytope traversal and verification for feed-forward ReLU networks.
//!
//! A ReLU network is affine on each cell of a hierarchical partition of its
//! input space. This crate enumerates those cells inside a bounded convex
//! region by breadth-first search over their adjacency graph and runs
//! linear programs on each cell's local model to verify output ranges,
//! robustness, counterfactual distance, monotonicity and linear output
//! properties.

pub mod dump;
pub mod error;
pub mod lp;
pub mod network;
pub mod oracle;
pub mod polytope;
pub mod traversal;
pub mod verifiers;

pub use error::{Error, Result};
