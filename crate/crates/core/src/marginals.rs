//! Marginal prices read off an optimal dual, and the congestion bound.
//!
//! All load prices here are gradients of the optimal operator value
//! `c̃ᵀp_g*` with respect to the injection vector `ℓ = [p̂_l; q̂_l]`, in that
//! order. The objective constant `−c_s·1ᵀp̂_l` is left out; it shifts every
//! real-power price by `−c_s` and cancels in any difference of prices.
//! [`MarginalReport::demand_prices`] converts to $/p.u. of consumption
//! including that constant.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::assemble::{solve_reduced, OpfSolution, SolveError};
use crate::fmt::sig;
use crate::netcase::BranchId;
use crate::opf_model::{DualSolution, ModelError, ReducedOpf};

pub const PRIMAL_BINDING_TOL: f64 = 1e-6;
pub const DUAL_BINDING_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MarginalError {
    #[error("the bound constant needs at least one binding branch")]
    EmptyBindingSet,
    #[error("the uncongested reference has binding branches {0:?}")]
    CongestedReference(Vec<BranchId>),
    #[error("the two reports describe problems of different size")]
    Mismatch,
    #[error("marginal prices need an optimal solution (status {0})")]
    NotOptimal(ldfopf_conic::Status),
    #[error("both perturbed problems are infeasible")]
    BothSidesInfeasible,
    #[error("branch {0} has no flow limit")]
    NoLimit(BranchId),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Binding status of one limited branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBinding {
    pub id: BranchId,
    /// Internal branch index.
    pub branch: usize,
    pub flow: (f64, f64),
    pub f_max: f64,
    pub mu: f64,
    /// `f̄ − ‖(y, z)‖ ≤ tol·max(1, f̄)`.
    pub primal: bool,
    /// `μ > tol`.
    pub dual: bool,
}

impl BranchBinding {
    pub fn binding(&self) -> bool {
        self.primal || self.dual
    }

    /// Primal and dual tests disagree: the limit is active with a zero
    /// multiplier, or the reverse. Prices there may not be unique.
    pub fn degenerate(&self) -> bool {
        self.primal != self.dual
    }
}

pub fn binding_set(
    opf: &ReducedOpf,
    p_g: &DVector<f64>,
    q_g: &DVector<f64>,
    dual: &DualSolution,
    tol: f64,
) -> Vec<BranchBinding> {
    opf.limits
        .iter()
        .enumerate()
        .map(|(k, lim)| {
            let flow = opf.flow(lim.branch, p_g, q_g);
            let gap = lim.f_max - flow.0.hypot(flow.1);
            BranchBinding {
                id: opf.branch_ids[lim.branch],
                branch: lim.branch,
                flow,
                f_max: lim.f_max,
                mu: dual.mu[k],
                primal: gap <= tol * lim.f_max.max(1.0),
                dual: dual.mu[k] > DUAL_BINDING_TOL,
            }
        })
        .collect()
}

/// `C_flow(j) = −μ_j` over all branches by internal index; zero where the
/// branch is unlimited.
pub fn flow_marginal_costs(opf: &ReducedOpf, dual: &DualSolution) -> DVector<f64> {
    let mut out = DVector::zeros(opf.branch_ids.len());
    for (k, lim) in opf.limits.iter().enumerate() {
        out[lim.branch] = -dual.mu[k];
    }
    out
}

/// `−Gᵀλ`, the load prices with every flow term dropped.
pub fn uncongested_load_costs(opf: &ReducedOpf, dual: &DualSolution) -> DVector<f64> {
    -opf.g.tr_mul(&dual.lambda)
}

/// `−Gᵀλ − Σ_{j∈I} (θ_j s_j + φ_j t_j)` with `binding` the internal indices
/// of `I`.
pub fn load_marginal_costs(opf: &ReducedOpf, dual: &DualSolution, binding: &[usize]) -> DVector<f64> {
    let mut c = uncongested_load_costs(opf, dual);
    for (k, lim) in opf.limits.iter().enumerate() {
        if binding.contains(&lim.branch) {
            c -= &opf.s[lim.branch] * dual.theta[k] + &opf.t[lim.branch] * dual.phi[k];
        }
    }
    c
}

/// `K = max_{j∈I} √nnz(s_j)·‖[s_j; t_j]‖`.
pub fn bound_constant(opf: &ReducedOpf, binding: &[usize]) -> Result<f64, MarginalError> {
    if binding.is_empty() {
        return Err(MarginalError::EmptyBindingSet);
    }
    Ok(binding
        .iter()
        .map(|&j| {
            let nnz = opf.s[j].iter().filter(|v| **v != 0.0).count() as f64;
            let norm = (opf.s[j].norm_squared() + opf.t[j].norm_squared()).sqrt();
            nnz.sqrt() * norm
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    /// `C_flow` by internal branch index.
    pub c_flow: DVector<f64>,
    /// `C_load`, ordered like `ℓ`.
    pub c_load: DVector<f64>,
    /// `−Gᵀλ` from the same dual.
    pub baseline: DVector<f64>,
    pub branches: Vec<BranchBinding>,
    /// `None` when nothing binds.
    pub k: Option<f64>,
    /// `K·Σ_{j∈I} |C_flow(j)|`, zero when nothing binds.
    pub bound_value: f64,
    pub slack_cost: f64,
}

impl MarginalReport {
    pub fn new(opf: &ReducedOpf, sol: &OpfSolution) -> Result<Self, MarginalError> {
        let dual = sol.dual.as_ref().ok_or(MarginalError::NotOptimal(sol.status))?;
        let branches = binding_set(opf, &sol.p_g, &sol.q_g, dual, PRIMAL_BINDING_TOL);
        let binding: Vec<usize> = branches.iter().filter(|b| b.binding()).map(|b| b.branch).collect();
        let c_flow = flow_marginal_costs(opf, dual);
        let k = bound_constant(opf, &binding).ok();
        let bound_value = k.map_or(0.0, |k| k * binding.iter().map(|&j| c_flow[j].abs()).sum::<f64>());
        Ok(MarginalReport {
            c_load: load_marginal_costs(opf, dual, &binding),
            baseline: uncongested_load_costs(opf, dual),
            c_flow,
            branches,
            k,
            bound_value,
            slack_cost: opf.slack_cost,
        })
    }

    pub fn binding_ids(&self) -> Vec<BranchId> {
        self.branches.iter().filter(|b| b.binding()).map(|b| b.id).collect()
    }

    /// Limited branches where the primal and dual binding tests disagree.
    pub fn degenerate_ids(&self) -> Vec<BranchId> {
        self.branches.iter().filter(|b| b.degenerate()).map(|b| b.id).collect()
    }

    /// Derivative of the full cost with respect to demand (consumption):
    /// `c_s − C_load` on the real half, `−C_load` on the reactive half.
    pub fn demand_prices(&self) -> DVector<f64> {
        let nl = self.c_load.len() / 2;
        DVector::from_fn(self.c_load.len(), |i, _| {
            if i < nl {
                self.slack_cost - self.c_load[i]
            } else {
                -self.c_load[i]
            }
        })
    }

    /// Writes `marginals.csv`: one row per load coordinate, then one per
    /// limited branch.
    pub fn write_csv(&self, opf: &ReducedOpf, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# ldf-opf v1")?;
        writeln!(
            w,
            "kind,id,axis,c_load,baseline,abs_diff,bound,price,flow,limit,binding,c_flow"
        )?;
        let nl = opf.num_loads();
        let price = self.demand_prices();
        for i in 0..2 * nl {
            let axis = if i < nl { "real" } else { "reactive" };
            writeln!(
                w,
                "load,{},{axis},{},{},{},{},{},,,,",
                opf.load_buses[i % nl],
                sig(self.c_load[i], 12),
                sig(self.baseline[i], 12),
                sig((self.c_load[i] - self.baseline[i]).abs(), 12),
                sig(self.bound_value, 12),
                sig(price[i], 12),
            )?;
        }
        for b in &self.branches {
            let mut line = format!("branch,{},,,,,,,", b.id);
            write!(
                line,
                "{},{},{},{}",
                sig(b.flow.0.hypot(b.flow.1), 12),
                sig(b.f_max, 12),
                b.binding(),
                sig(self.c_flow[b.branch], 12)
            )
            .unwrap();
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    /// `|ΔC_load|` on the real half.
    pub lhs_real: DVector<f64>,
    /// `|ΔC_load|` on the reactive half.
    pub lhs_reactive: DVector<f64>,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn worst_lhs(&self) -> f64 {
        self.lhs_real
            .iter()
            .chain(self.lhs_reactive.iter())
            .fold(0.0, |a, &b| a.max(b))
    }
}

/// Compares load prices under congestion against an uncongested reference
/// of the same case.
pub fn congestion_bound_check(
    congested: &MarginalReport,
    uncongested: &MarginalReport,
) -> Result<BoundCheck, MarginalError> {
    let reference = uncongested.binding_ids();
    if !reference.is_empty() {
        return Err(MarginalError::CongestedReference(reference));
    }
    if congested.c_load.len() != uncongested.c_load.len() {
        return Err(MarginalError::Mismatch);
    }
    let nl = congested.c_load.len() / 2;
    let diff = (&congested.c_load - &uncongested.c_load).abs();
    let rhs = congested.bound_value;
    Ok(BoundCheck {
        holds: diff.iter().all(|&d| d <= rhs + 1e-9),
        lhs_real: diff.rows(0, nl).into_owned(),
        lhs_reactive: diff.rows(nl, nl).into_owned(),
        rhs,
    })
}

/// A parameter of the value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    /// Entry of `ℓ`.
    Load(usize),
    /// Flow limit of a branch, by id.
    Limit(BranchId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    Central,
    /// `−δ` was infeasible.
    Forward,
    /// `+δ` was infeasible.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub difference: Difference,
    /// One-sided slopes differ: the step crosses a breakpoint and `value`
    /// is not a gradient.
    pub kink: bool,
}

/// Finite-difference derivative of the optimal operator value `c̃ᵀp_g*`
/// along `coord`, from fresh solves at `±δ` (and at the point itself, for
/// the kink test).
pub fn fd_gradient(opf: &ReducedOpf, coord: Coordinate, delta: f64) -> Result<FdEstimate, MarginalError> {
    let perturbed = |step: f64| -> Result<ReducedOpf, MarginalError> {
        match coord {
            Coordinate::Load(i) => {
                let mut ell = opf.ell.clone();
                ell[i] += step;
                Ok(opf.with_ell(ell)?)
            }
            Coordinate::Limit(id) => {
                let j = opf
                    .branch_ids
                    .iter()
                    .position(|&b| b == id)
                    .ok_or(ModelError::UnknownBranch(id))?;
                let lim = opf
                    .limits
                    .iter()
                    .find(|l| l.branch == j)
                    .ok_or(MarginalError::NoLimit(id))?;
                Ok(opf.with_limit(id, Some(lim.f_max + step))?)
            }
        }
    };
    let value_at = |step: f64| -> Result<Option<f64>, MarginalError> {
        let sol = solve_reduced(&perturbed(step)?)?;
        Ok(sol.is_optimal().then_some(sol.operator_value))
    };
    let center = value_at(0.0)?;
    let plus = value_at(delta)?;
    let minus = value_at(-delta)?;
    let slopes_differ = |a: f64, b: f64| (a - b).abs() > 1e-3_f64.max(1e-2 * a.abs().max(b.abs()));
    match (minus, plus) {
        (Some(m), Some(p)) => {
            let value = (p - m) / (2.0 * delta);
            let kink = center.is_some_and(|c| slopes_differ((p - c) / delta, (c - m) / delta));
            Ok(FdEstimate {
                value,
                difference: Difference::Central,
                kink,
            })
        }
        (None, Some(p)) => {
            let c = center.ok_or(MarginalError::BothSidesInfeasible)?;
            Ok(FdEstimate {
                value: (p - c) / delta,
                difference: Difference::Forward,
                kink: false,
            })
        }
        (Some(m), None) => {
            let c = center.ok_or(MarginalError::BothSidesInfeasible)?;
            Ok(FdEstimate {
                value: (c - m) / delta,
                difference: Difference::Backward,
                kink: false,
            })
        }
        (None, None) => Err(MarginalError::BothSidesInfeasible),
    }
}
