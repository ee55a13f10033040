//! Sparse nonlinear programming for the collocation transcriptions.
//!
//! [`Nlp`] describes a problem through callbacks; [`InteriorPoint`] is the
//! reference [`SolverBackend`]. The [`ldl`] module holds the sparse
//! symmetric indefinite factorization used for the Newton systems.

mod ipm;
mod kkt;
pub mod ldl;
mod problem;
mod solver;

pub use ipm::InteriorPoint;
pub use kkt::{kkt_residuals, KktReport};
pub use problem::{Nlp, NlpError};
pub use solver::{constraint_violation, Capabilities, NlpSolution, SolveStatus, SolverBackend, SolverOptions};
