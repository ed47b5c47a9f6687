//! Skeletonization-based fast direct solvers for discretized integral
//! equations: the recursive skeletonization factorization for quasi-1D
//! boundary problems, the hierarchical interpolative factorization for 2D
//! volume problems, and an exact local-update algorithm that refactors only
//! the boxes a localized perturbation can reach.
//!
//! Everything is deterministic by construction: rebuilding a factorization
//! from identical inputs reproduces it bit for bit, and updating after a
//! localized change yields exactly the factorization a from-scratch build on
//! the same tree would produce.

// indexed loops over matrix blocks are the house style here
#![allow(clippy::needless_range_loop)]

pub mod compress;
pub mod dense;
pub mod error;
pub mod factor;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod serial;
pub mod skel;
pub mod special;
pub mod update;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
