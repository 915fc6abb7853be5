use nalgebra::{DMatrix, DVector};

use crate::cone::{min_eig, ConeBlock};
use crate::ProgramError;

/// `min cᵀx  s.t.  A x + s = b,  s ∈ K` where `K` is the product of
/// `cones` in row order.
///
/// The dual is `max −bᵀy  s.t.  Aᵀy + c = 0,  y ∈ K*`; every cone used here
/// is self-dual except the zero cone, whose dual is free.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: Vec<ConeBlock>,
    /// Constant added to the objective. It does not move the solution but
    /// enters the relative gap test, so a program whose constant part
    /// dominates is not stopped early.
    pub offset: f64,
}

impl ConicProgram {
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>, cones: Vec<ConeBlock>) -> Result<Self, ProgramError> {
        let prog = ConicProgram {
            c,
            a,
            b,
            cones,
            offset: 0.0,
        };
        prog.validate()?;
        Ok(prog)
    }

    pub fn with_offset(self, offset: f64) -> Self {
        ConicProgram { offset, ..self }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let (m, n) = self.a.shape();
        if n != self.c.len() {
            return Err(ProgramError::Dimension(format!(
                "A has {n} columns but c has length {}",
                self.c.len()
            )));
        }
        if m != self.b.len() {
            return Err(ProgramError::Dimension(format!(
                "A has {m} rows but b has length {}",
                self.b.len()
            )));
        }
        let total: usize = self.cones.iter().map(ConeBlock::dim).sum();
        if total != m {
            return Err(ProgramError::Dimension(format!(
                "cone blocks cover {total} rows, A has {m}"
            )));
        }
        for block in &self.cones {
            if let ConeBlock::Soc(k) = block {
                if *k < 2 {
                    return Err(ProgramError::Cone(format!("second-order cone of size {k}")));
                }
            }
        }
        let finite = self
            .c
            .iter()
            .chain(self.b.iter())
            .chain(self.a.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ProgramError::NonFinite);
        }
        Ok(())
    }

    /// Row offset of each cone block.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.cones.len());
        let mut at = 0;
        for block in &self.cones {
            offsets.push(at);
            at += block.dim();
        }
        offsets
    }

    /// Smallest cone eigenvalue of `v` over all non-zero-cone blocks, and
    /// the largest absolute entry on zero-cone rows.
    pub fn cone_violation(&self, v: &DVector<f64>) -> (f64, f64) {
        let mut worst_eig = f64::INFINITY;
        let mut worst_zero: f64 = 0.0;
        for (block, start) in self.cones.iter().zip(self.block_offsets()) {
            let slice = &v.as_slice()[start..start + block.dim()];
            if block.is_zero() {
                worst_zero = slice.iter().fold(worst_zero, |acc, x| acc.max(x.abs()));
            } else {
                worst_eig = worst_eig.min(min_eig(*block, slice));
            }
        }
        (worst_eig, worst_zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    /// The step length collapsed before any termination test passed.
    NumericalError,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::PrimalInfeasible => "primal-infeasible",
            Status::DualInfeasible => "dual-infeasible",
            Status::MaxIterations => "max-iterations",
            Status::NumericalError => "numerical-error",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scaled residuals of a returned point.
///
/// `primal = ‖Ax + s − b‖∞ / (1 + ‖b‖∞)`, `dual = ‖Aᵀy + c‖∞ / (1 + ‖c‖∞)`,
/// `gap = |cᵀx + bᵀy|` (absolute).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub y: DVector<f64>,
    /// `cᵀx`.
    pub objective: f64,
    /// `−bᵀy`.
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// For `PrimalInfeasible`: `y ∈ K*` with `bᵀy = −1`, `Aᵀy ≈ 0`.
    /// For `DualInfeasible`: `x` with `cᵀx = −1`, `−Ax ∈ K`.
    pub certificate: Option<DVector<f64>>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor for the combined step.
    pub step_fraction: f64,
    pub static_reg: f64,
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            tol_infeas: 1e-8,
            max_iter: 100,
            step_fraction: 0.99,
            static_reg: 1e-9,
            refine_steps: 6,
        }
    }
}

/// Anything that can solve a [`ConicProgram`] to a [`SolveResult`].
pub trait ConicSolver {
    fn solve(&self, prog: &ConicProgram) -> Result<SolveResult, ProgramError>;
}
