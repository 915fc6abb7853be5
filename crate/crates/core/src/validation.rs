//! Invariant checks run by `ldf-opf validate`.

use nalgebra::SymmetricEigen;

use crate::direct::solve_direct;
use crate::ldf::{build_f, build_incidence};
use crate::marginals::{fd_gradient, Coordinate, MarginalReport};
use crate::Instance;

pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

/// Largest `|F − A⁻ᵀ|` entry, with `A⁻¹` from a dense LU.
pub fn flow_matrix_error(inst: &Instance) -> Option<f64> {
    let (_, a) = build_incidence(&inst.topo);
    let inv = a.try_inverse()?;
    Some((inv.transpose() - build_f(&inst.topo)).amax())
}

/// Branches where `‖r_j‖²`, `‖s_j‖²` or `‖t_j‖²` differ from the number of
/// generator or load buses downstream.
pub fn norm_identity_failures(inst: &Instance) -> Vec<usize> {
    let part = &inst.ldf.partition;
    let c = &inst.ldf.coeffs;
    (0..inst.topo.n())
        .filter(|&j| {
            let gens = part.gens.iter().filter(|&&b| inst.topo.is_downstream(j, b)).count() as f64;
            let loads = part.loads.iter().filter(|&&b| inst.topo.is_downstream(j, b)).count() as f64;
            c.r[j].norm_squared() != gens || c.s[j].norm_squared() != loads || c.t[j].norm_squared() != loads
        })
        .collect()
}

/// Smallest eigenvalue of `R` and of `X`.
pub fn min_eigenvalues(inst: &Instance) -> (f64, f64) {
    let min = |m: &nalgebra::DMatrix<f64>| {
        if m.is_empty() {
            0.0
        } else {
            SymmetricEigen::new(m.clone()).eigenvalues.min()
        }
    };
    (min(&inst.ldf.r), min(&inst.ldf.x))
}

/// Agreement between finite differences and the closed-form prices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdComparison {
    pub compared: usize,
    pub skipped_kinks: usize,
    pub one_sided: usize,
    pub worst_excess: f64,
    pub failures: Vec<String>,
}

/// `max(1e−3, 1e−2·|value|)`.
pub fn fd_tolerance(value: f64) -> f64 {
    1e-3_f64.max(1e-2 * value.abs())
}

/// Compares every load coordinate in `loads` and every limited branch
/// against central differences. Coordinates whose step crosses a
/// breakpoint are counted but not judged.
pub fn compare_fd(inst: &Instance, report: &MarginalReport, loads: &[usize]) -> FdComparison {
    let mut out = FdComparison::default();
    let opf = &inst.opf;
    let mut judge = |label: String, closed: f64, coord: Coordinate, delta: f64| match fd_gradient(opf, coord, delta) {
        Ok(fd) if fd.kink => out.skipped_kinks += 1,
        Ok(fd) => {
            if fd.difference != crate::marginals::Difference::Central {
                out.one_sided += 1;
            }
            out.compared += 1;
            let err = (fd.value - closed).abs();
            let tol = fd_tolerance(closed);
            out.worst_excess = out.worst_excess.max(err - tol);
            if err > tol {
                out.failures.push(format!(
                    "{label}: closed form {closed:.6e}, difference {:.6e}",
                    fd.value
                ));
            }
        }
        Err(e) => out.failures.push(format!("{label}: {e}")),
    };
    let nl = opf.num_loads();
    for &i in loads {
        let axis = if i < nl { "p" } else { "q" };
        let label = format!("load {} {axis}", opf.load_buses[i % nl]);
        judge(label, report.c_load[i], Coordinate::Load(i), FD_STEP);
    }
    for lim in &opf.limits {
        let id = opf.branch_ids[lim.branch];
        judge(
            format!("limit {id}"),
            report.c_flow[lim.branch],
            Coordinate::Limit(id),
            FD_STEP * lim.f_max.max(1e-3),
        );
    }
    out
}

/// Load coordinates to difference: all of them for small cases, otherwise
/// `cap` evenly spread ones.
pub fn fd_coordinates(inst: &Instance, cap: usize) -> Vec<usize> {
    let m = 2 * inst.opf.num_loads();
    if m <= cap {
        (0..m).collect()
    } else {
        (0..cap).map(|k| k * m / cap).collect()
    }
}

pub fn run_suite(inst: &Instance) -> Vec<Check> {
    let mut checks = Vec::new();

    match flow_matrix_error(inst) {
        Some(err) => checks.push(Check::new(
            "flow matrix vs inverse incidence",
            err <= 1e-10,
            format!("max error {err:.2e}"),
        )),
        None => checks.push(Check::new(
            "flow matrix vs inverse incidence",
            false,
            "incidence matrix is singular".into(),
        )),
    }

    let bad = norm_identity_failures(inst);
    checks.push(Check::new(
        "branch coefficient norms",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} branches exact", inst.topo.n())
        } else {
            format!("{} branches differ", bad.len())
        },
    ));

    let (er, ex) = min_eigenvalues(inst);
    checks.push(Check::new(
        "R and X positive semidefinite",
        er >= -1e-9 && ex >= -1e-9,
        format!("min eigenvalues {er:.2e}, {ex:.2e}"),
    ));

    let sol = match inst.solve() {
        Ok(sol) if sol.is_optimal() => sol,
        Ok(sol) => {
            checks.push(Check::new("solve", false, format!("status {}", sol.status)));
            return checks;
        }
        Err(e) => {
            checks.push(Check::new("solve", false, e.to_string()));
            return checks;
        }
    };
    let opf = &inst.opf;
    let j = sol.objective;

    match solve_direct(inst) {
        Ok(d) if d.status == ldfopf_conic::Status::Optimal => {
            let rel = (d.objective - j).abs() / (1.0 + d.objective.abs());
            checks.push(Check::new(
                "reduced vs full problem",
                rel <= 1e-8,
                format!("relative difference {rel:.2e}"),
            ));
        }
        Ok(d) => checks.push(Check::new(
            "reduced vs full problem",
            false,
            format!("full problem {}", d.status),
        )),
        Err(e) => checks.push(Check::new("reduced vs full problem", false, e.to_string())),
    }

    let dual = sol.dual.as_ref().expect("optimal solutions carry duals");
    let gap = (j - opf.dual_value(dual)).abs();
    checks.push(Check::new(
        "strong duality",
        gap <= 1e-6 * (1.0 + j.abs()),
        format!("|J - D| = {gap:.2e}, J = {j:.9}"),
    ));

    let res = opf.check_dual_feasible(dual);
    let comp = opf.complementarity(&sol.p_g, &sol.q_g, dual);
    let primal = opf.primal_violation(&sol.p_g, &sol.q_g);
    checks.push(Check::new(
        "KKT residuals",
        res.max() <= 1e-6 && comp <= 1e-6 && primal <= 1e-6,
        format!(
            "dual {:.2e}, complementarity {comp:.2e}, primal {primal:.2e}",
            res.max()
        ),
    ));

    match MarginalReport::new(opf, &sol) {
        Ok(report) => {
            let fd = compare_fd(inst, &report, &fd_coordinates(inst, 24));
            checks.push(Check::new(
                "marginals vs finite differences",
                fd.failures.is_empty(),
                format!(
                    "{} compared, {} at breakpoints, {} one-sided{}",
                    fd.compared,
                    fd.skipped_kinks,
                    fd.one_sided,
                    fd.failures.first().map_or(String::new(), |f| format!("; {f}"))
                ),
            ));
        }
        Err(e) => checks.push(Check::new("marginals vs finite differences", false, e.to_string())),
    }
    checks
}
