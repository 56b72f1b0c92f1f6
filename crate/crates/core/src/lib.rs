//! Semismooth Newton solvers for optimistic bilevel programs.
//!
//! Two single-level models are supported, each written as a square nonsmooth
//! system `Phi(zeta) = 0` built from Fischer-Burmeister complementarity pieces:
//!
//! * the lower-level KKT model ([`kkt`]), with variables `(x, y, z, s, u, v, w)`;
//! * the lower-level value-function model ([`llvf`]), with variables `(x, y, z, u, v, w)`.
//!
//! [`newton::solve`] runs a globalized semismooth Newton method on either system,
//! [`diagnostics`] checks the regularity conditions behind fast local convergence,
//! and [`bench`] drives penalty-parameter sweeps and reporting.

pub mod bench;
pub mod diagnostics;
pub mod fb;
pub mod kkt;
pub mod linalg;
pub mod llvf;
pub mod newton;
pub mod problem;
pub mod suite;

pub use linalg::{Matrix, Vector};
pub use newton::{Model, SolveReport, SolveStatus, SolverConfig};
pub use problem::{BilevelProblem, Dims, KnownStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("asymmetric quadratic form: {0}")]
    Symmetry(String),
    #[error("non-finite function value: {0}")]
    NonFiniteEvaluation(String),
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("reference values have unknown status; delta is undefined")]
    UnknownStatus,
    #[error("no feasible grid point: {0}")]
    InfeasibleGrid(String),
}
