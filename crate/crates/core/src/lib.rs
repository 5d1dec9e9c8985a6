//! Numerical mechanics on finite-rank almost Lie algebroids.
//!
//! The crate evaluates anchors, brackets and almost exterior differentials
//! given as expression tables, integrates Hamiltonian and Euler–Lagrange
//! dynamics, checks the Hamilton–Jacobi equivalence numerically, and solves
//! the discrete snake horizontal-lift problem.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebroid;
pub mod dual;
pub mod error;
pub mod expr;
pub mod hj;
pub mod io;
pub mod linalg;
pub mod mechanics;
pub mod poisson;
pub mod random;
pub mod snake;
pub mod suite;
pub mod trajectory;

pub use error::{Error, Result};
