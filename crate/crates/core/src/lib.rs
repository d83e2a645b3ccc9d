//! Semismooth Newton method for M-stationary points of mathematical programs
//! with complementarity constraints.
//!
//! The complementarity system is rewritten with the functions of [`nms`] as a
//! square nonsmooth system `F(z) = 0` ([`residual`]), solved locally by Newton's
//! method or globally with the Fischer-Burmeister merit of [`merit`]
//! ([`solver`]). Singular Newton matrices of linear-quadratic problems are
//! repaired by [`linquad`].

pub mod error;
pub mod harness;
pub mod linalg;
pub mod linquad;
pub mod merit;
pub mod nms;
pub mod problem;
pub mod residual;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{MpccProblem, PrimalDual};
pub use solver::{solve_global, solve_local, SolveOptions, SolveReport, Status};
