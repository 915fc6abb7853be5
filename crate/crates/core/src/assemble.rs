//! Mapping between [`ReducedOpf`] and the generic [`ConicProgram`].
//!
//! Variables are `x = [p_g; q_g]`. Rows come in three blocks: equalities
//! (pairs of opposite inequalities with equal bounds, such as a pinned
//! voltage), the remaining inequalities, then one three-row second-order
//! cone per limited branch laid out as
//!
//! ```text
//! b − A x = (f̄_j, −y_j, −z_j),   y_j = r_jᵀp_g + s_jᵀℓ,   z_j = r_jᵀq_g + t_jᵀℓ
//! ```
//!
//! A cone multiplier `(u0, u1, u2)` therefore maps to `μ_j = u0`,
//! `θ_j = −u1`, `φ_j = −u2`.

use ldfopf_conic::{ConeBlock, ConicProgram, ConicSolver, InteriorPoint, Residuals, Status};
use nalgebra::{DMatrix, DVector};

use crate::opf_model::{DualSolution, ReducedOpf, RowKind};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("solver rejected the program: {0}")]
    Program(#[from] ldfopf_conic::ProgramError),
    #[error("duals are only defined at an optimal solution (status {0})")]
    NotOptimal(Status),
}

/// Collects rows by kind and emits them in cone order.
pub(crate) struct Builder {
    n: usize,
    eq: Vec<(Vec<f64>, f64)>,
    le: Vec<(Vec<f64>, f64)>,
    soc: Vec<[(Vec<f64>, f64); 3]>,
}

/// Where a row landed in the assembled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Inequality row; its multiplier is read as is.
    Le(usize),
    /// First row of an equality; the multiplier's positive part.
    EqPositive(usize),
    /// Second row of an equality; the multiplier's negative part.
    EqNegative(usize),
}

impl Builder {
    pub(crate) fn new(n: usize) -> Self {
        Builder {
            n,
            eq: Vec::new(),
            le: Vec::new(),
            soc: Vec::new(),
        }
    }

    pub(crate) fn le(&mut self, row: Vec<f64>, b: f64) -> Slot {
        debug_assert_eq!(row.len(), self.n);
        self.le.push((row, b));
        Slot::Le(self.le.len() - 1)
    }

    pub(crate) fn eq(&mut self, row: Vec<f64>, b: f64) -> usize {
        debug_assert_eq!(row.len(), self.n);
        self.eq.push((row, b));
        self.eq.len() - 1
    }

    /// `a x ≤ b_up` and `−a x ≤ b_lo`; merged into `a x = b_up` when the
    /// bounds coincide. Infinite bounds produce no row.
    pub(crate) fn range(&mut self, row: Vec<f64>, b_up: f64, b_lo: f64) -> (Option<Slot>, Option<Slot>) {
        if b_up.is_finite() && b_lo.is_finite() && b_up + b_lo == 0.0 {
            let k = self.eq(row, b_up);
            return (Some(Slot::EqPositive(k)), Some(Slot::EqNegative(k)));
        }
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        let up = b_up.is_finite().then(|| self.le(row, b_up));
        let lo = b_lo.is_finite().then(|| self.le(neg, b_lo));
        (up, lo)
    }

    pub(crate) fn soc(&mut self, rows: [(Vec<f64>, f64); 3]) -> usize {
        self.soc.push(rows);
        self.soc.len() - 1
    }

    pub(crate) fn build(self, c: DVector<f64>) -> Result<(ConicProgram, Layout), ldfopf_conic::ProgramError> {
        let m = self.eq.len() + self.le.len() + 3 * self.soc.len();
        let mut a = DMatrix::zeros(m, self.n);
        let mut b = DVector::zeros(m);
        let rows = self.eq.iter().chain(&self.le).chain(self.soc.iter().flatten());
        for (at, (row, rhs)) in rows.enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[(at, j)] = *v;
            }
            b[at] = *rhs;
        }
        let mut cones = Vec::new();
        if !self.eq.is_empty() {
            cones.push(ConeBlock::Zero(self.eq.len()));
        }
        if !self.le.is_empty() {
            cones.push(ConeBlock::NonNeg(self.le.len()));
        }
        cones.extend(std::iter::repeat_n(ConeBlock::Soc(3), self.soc.len()));
        let layout = Layout {
            le_offset: self.eq.len(),
            soc_offset: self.eq.len() + self.le.len(),
        };
        Ok((ConicProgram::new(c, a, b, cones)?, layout))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    le_offset: usize,
    soc_offset: usize,
}

impl Layout {
    /// Multiplier for a slot, read from the solver's dual vector.
    pub fn read(&self, slot: Option<Slot>, y: &DVector<f64>) -> f64 {
        match slot {
            None => 0.0,
            Some(Slot::Le(k)) => y[self.le_offset + k],
            Some(Slot::EqPositive(k)) => y[k].max(0.0),
            Some(Slot::EqNegative(k)) => (-y[k]).max(0.0),
        }
    }

    /// The three multipliers of second-order cone `k`.
    pub fn cone(&self, k: usize, y: &DVector<f64>) -> (f64, f64, f64) {
        let at = self.soc_offset + 3 * k;
        (y[at], y[at + 1], y[at + 2])
    }
}

/// A reduced OPF in conic form, with enough bookkeeping to read the duals
/// back.
#[derive(Debug, Clone)]
pub struct AssembledOpf {
    pub program: ConicProgram,
    layout: Layout,
    linear: Vec<Option<Slot>>,
    p_bounds: Vec<(Option<Slot>, Option<Slot>)>,
    q_bounds: Vec<(Option<Slot>, Option<Slot>)>,
    n_gen: usize,
    n_cones: usize,
}

pub fn assemble(opf: &ReducedOpf) -> Result<AssembledOpf, SolveError> {
    let ng = opf.num_generators();
    let n = 2 * ng;
    let mut builder = Builder::new(n);
    let rhs = &opf.g * &opf.ell + &opf.h;
    let row_of = |i: usize| -> Vec<f64> { opf.m_p.row(i).iter().chain(opf.m_q.row(i).iter()).copied().collect() };

    let mut linear = vec![None; opf.num_rows()];
    for (i, kind) in opf.rows.iter().enumerate() {
        if linear[i].is_some() {
            continue;
        }
        let partner = match kind {
            RowKind::VoltageUpper(b) => opf.rows.iter().position(|k| *k == RowKind::VoltageLower(*b)),
            RowKind::SlackRealUpper => opf.rows.iter().position(|k| *k == RowKind::SlackRealLower),
            RowKind::SlackReactiveUpper => opf.rows.iter().position(|k| *k == RowKind::SlackReactiveLower),
            _ => None,
        };
        match partner {
            Some(lo) if opf.h[i] + opf.h[lo] == 0.0 => {
                let k = builder.eq(row_of(i), rhs[i]);
                linear[i] = Some(Slot::EqPositive(k));
                linear[lo] = Some(Slot::EqNegative(k));
            }
            _ => linear[i] = Some(builder.le(row_of(i), rhs[i])),
        }
    }

    let unit = |k: usize| {
        let mut row = vec![0.0; n];
        row[k] = 1.0;
        row
    };
    let p_bounds = (0..ng)
        .map(|k| builder.range(unit(k), opf.p_max[k], -opf.p_min[k]))
        .collect();
    let q_bounds = (0..ng)
        .map(|k| builder.range(unit(ng + k), opf.q_max[k], -opf.q_min[k]))
        .collect();

    for lim in &opf.limits {
        let j = lim.branch;
        let mut ry = vec![0.0; n];
        let mut rz = vec![0.0; n];
        for k in 0..ng {
            ry[k] = opf.r[j][k];
            rz[ng + k] = opf.r[j][k];
        }
        builder.soc([
            (vec![0.0; n], lim.f_max),
            (ry, -opf.s[j].dot(&opf.ell)),
            (rz, -opf.t[j].dot(&opf.ell)),
        ]);
    }

    let c = DVector::from_fn(n, |k, _| if k < ng { opf.c_tilde[k] } else { 0.0 });
    let (program, layout) = builder.build(c)?;
    Ok(AssembledOpf {
        program: program.with_offset(opf.constant_offset()),
        layout,
        linear,
        p_bounds,
        q_bounds,
        n_gen: ng,
        n_cones: opf.limits.len(),
    })
}

impl AssembledOpf {
    pub fn extract_duals(&self, result: &ldfopf_conic::SolveResult) -> Result<DualSolution, SolveError> {
        if result.status != Status::Optimal {
            return Err(SolveError::NotOptimal(result.status));
        }
        let y = &result.y;
        let l = &self.layout;
        let ng = self.n_gen;
        let pick = |slots: &[(Option<Slot>, Option<Slot>)], upper: bool| {
            DVector::from_fn(ng, |k, _| l.read(if upper { slots[k].0 } else { slots[k].1 }, y))
        };
        let mut theta = DVector::zeros(self.n_cones);
        let mut phi = DVector::zeros(self.n_cones);
        let mut mu = DVector::zeros(self.n_cones);
        for k in 0..self.n_cones {
            let (u0, u1, u2) = l.cone(k, y);
            mu[k] = u0;
            theta[k] = -u1;
            phi[k] = -u2;
        }
        Ok(DualSolution {
            lambda: DVector::from_iterator(self.linear.len(), self.linear.iter().map(|s| l.read(*s, y))),
            alpha_lb: pick(&self.p_bounds, false),
            alpha_ub: pick(&self.p_bounds, true),
            beta_lb: pick(&self.q_bounds, false),
            beta_ub: pick(&self.q_bounds, true),
            theta,
            phi,
            mu,
        })
    }
}

/// Result of solving a reduced OPF.
#[derive(Debug, Clone)]
pub struct OpfSolution {
    pub status: Status,
    pub p_g: DVector<f64>,
    pub q_g: DVector<f64>,
    /// `c̃ᵀp_g`, the optimal-value operator.
    pub operator_value: f64,
    /// Full-problem cost: `c̃ᵀp_g` plus the constant offset.
    pub objective: f64,
    /// Present exactly when `status` is optimal.
    pub dual: Option<DualSolution>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub certificate: Option<DVector<f64>>,
}

impl OpfSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

pub fn solve_reduced(opf: &ReducedOpf) -> Result<OpfSolution, SolveError> {
    solve_reduced_with(opf, &InteriorPoint::default())
}

pub fn solve_reduced_with(opf: &ReducedOpf, solver: &dyn ConicSolver) -> Result<OpfSolution, SolveError> {
    let assembled = assemble(opf)?;
    let result = solver.solve(&assembled.program)?;
    let ng = opf.num_generators();
    let p_g = result.x.rows(0, ng).into_owned();
    let q_g = result.x.rows(ng, ng).into_owned();
    let dual = assembled.extract_duals(&result).ok();
    let operator_value = opf.operator_value(&p_g);
    Ok(OpfSolution {
        status: result.status,
        objective: operator_value + opf.constant_offset(),
        operator_value,
        p_g,
        q_g,
        dual,
        residuals: result.residuals,
        iterations: result.iterations,
        certificate: result.certificate,
    })
}
