//! Dense primal-dual interior-point solver for conic programs over products
//! of zero cones, nonnegative orthants and second-order cones.
//!
//! The solver works on the homogeneous self-dual embedding, uses
//! Nesterov–Todd scaling and Mehrotra predictor-corrector steps, and factors
//! its Newton systems densely. It is sized for problems with up to a few
//! hundred variables and a few thousand rows.

pub mod cone;
mod ipm;
mod kkt;
mod program;

pub use cone::ConeBlock;
pub use ipm::InteriorPoint;
pub use program::{ConicProgram, ConicSolver, Residuals, SolveResult, SolverOptions, Status};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid cone: {0}")]
    Cone(String),
    #[error("problem data contains NaN or infinite entries")]
    NonFinite,
}
