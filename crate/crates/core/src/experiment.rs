//! The two-branch flow-limit sweep.
//!
//! Pass 1 adds distributed generation to a case, solves it with no flow
//! limits and freezes the limits of every branch upstream of a generator
//! (plus the swept branches) at the flows it found. Pass 2 scales the limits
//! of the two swept branches over a grid and records how far the load
//! prices move away from the unlimited solution, next to the bound
//! `K·Σ|C_flow|`.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use ldfopf_conic::{InteriorPoint, SolverOptions, Status};
use rayon::prelude::*;

use crate::assemble::{solve_reduced_with, OpfSolution};
use crate::fmt::sig;
use crate::marginals::{congestion_bound_check, BoundCheck, MarginalReport};
use crate::netcase::{
    augment_distributed_generation, set_flow_limits_from_solution, BranchId, BusId, BusKind, CaseError, DgSpec,
    NetworkCase,
};
use crate::{Error, Instance};

/// Flows `(f^p, f^q)` of every branch at a dispatch, keyed by branch id.
pub fn branch_flows(inst: &Instance, sol: &OpfSolution) -> BTreeMap<BranchId, (f64, f64)> {
    (0..inst.topo.n())
        .map(|j| (inst.topo.branch_id(j), inst.opf.flow(j, &sol.p_g, &sol.q_g)))
        .collect()
}

/// Branches with at least one generator downstream.
pub fn generator_upstream_branches(inst: &Instance) -> Vec<BranchId> {
    (0..inst.topo.n())
        .filter(|&j| inst.opf.r[j].iter().any(|&v| v != 0.0))
        .map(|j| inst.topo.branch_id(j))
        .collect()
}

/// `steps` evenly spaced values from `start` to `end`, both included.
pub fn linspace(start: f64, end: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![start],
        _ => (0..steps)
            .map(|k| start + (end - start) * k as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Generators to add; its seed fixes the whole experiment.
    pub dg: DgSpec,
    /// The two branches whose limits are scaled.
    pub branches: [BranchId; 2],
    pub scale_start: f64,
    pub scale_end: f64,
    pub steps: usize,
    pub watch_bus: BusId,
    /// Worker count; `None` lets the pool decide.
    pub threads: Option<usize>,
    /// Options for every solve.
    pub solver: SolverOptions,
}

impl SweepConfig {
    pub fn validate(&self, case: &NetworkCase) -> Result<(), CaseError> {
        let arg = |msg: String| Err(CaseError::Argument(msg));
        if !(0.0 < self.scale_end && self.scale_end <= self.scale_start && self.scale_start <= 1.0) {
            return arg(format!(
                "scale range must satisfy 0 < end <= start <= 1, got {}:{}",
                self.scale_start, self.scale_end
            ));
        }
        if self.steps == 0 {
            return arg("the scale grid needs at least one step".into());
        }
        match case.bus(self.watch_bus) {
            Some(b) if b.kind == BusKind::Load => {}
            Some(_) => return arg(format!("watch bus {} is not a load bus", self.watch_bus)),
            None => return arg(format!("unknown watch bus {}", self.watch_bus)),
        }
        for id in self.branches {
            if case.branch(id).is_none() {
                return arg(format!("unknown branch {id}"));
            }
        }
        if self.branches[0] == self.branches[1] {
            return arg("the two swept branches must differ".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub scales: (f64, f64),
    pub status: Status,
    pub report: Option<MarginalReport>,
    pub check: Option<BoundCheck>,
    /// Signed `C_load − C_load(unlimited)` at the watch bus, real and
    /// reactive.
    pub watch_delta: Option<(f64, f64)>,
}

impl SweepPoint {
    pub fn holds(&self) -> Option<bool> {
        self.check.as_ref().map(|c| c.holds)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// The augmented case with frozen limits at scale 1.
    pub case: NetworkCase,
    pub reference: MarginalReport,
    pub reference_solution: OpfSolution,
    pub frozen: Vec<BranchId>,
    /// Base limits of the two swept branches.
    pub base_limits: (f64, f64),
    /// Row-major over `(scale_b1, scale_b2)`.
    pub points: Vec<SweepPoint>,
}

fn strip_limits(case: &NetworkCase) -> NetworkCase {
    let mut out = case.clone();
    for br in &mut out.branches {
        br.f_max = None;
    }
    out
}

pub fn run_sweep(case: &NetworkCase, cfg: &SweepConfig) -> Result<SweepResult, Error> {
    cfg.validate(case)?;
    let augmented = strip_limits(&augment_distributed_generation(case, &cfg.dg, &[cfg.watch_bus])?);

    let solver = InteriorPoint::new(cfg.solver);
    let unlimited = Instance::new(augmented.clone())?;
    let reference_solution = solve_reduced_with(&unlimited.opf, &solver)?;
    let reference = MarginalReport::new(&unlimited.opf, &reference_solution)
        .map_err(|_| CaseError::Argument(format!("the unlimited case is {}", reference_solution.status)))?;

    let flows = branch_flows(&unlimited, &reference_solution);
    let mut frozen = generator_upstream_branches(&unlimited);
    frozen.extend(cfg.branches);
    frozen.sort();
    frozen.dedup();
    // a branch carrying nothing cannot be given a positive limit
    frozen.retain(|id| flows[id].0.hypot(flows[id].1) > 0.0);
    for id in cfg.branches {
        if !frozen.contains(&id) {
            return Err(CaseError::Argument(format!("branch {id} carries no flow in the unlimited solution")).into());
        }
    }
    let limited_case = set_flow_limits_from_solution(&augmented, &flows, &frozen)?;
    let limited = Instance::new(limited_case.clone())?;
    let base = |id: BranchId| {
        limited_case
            .branch(id)
            .and_then(|b| b.f_max)
            .expect("frozen branches have limits")
    };
    let base_limits = (base(cfg.branches[0]), base(cfg.branches[1]));

    let scales = linspace(cfg.scale_start, cfg.scale_end, cfg.steps);
    let grid: Vec<(f64, f64)> = scales
        .iter()
        .flat_map(|&a| scales.iter().map(move |&b| (a, b)))
        .collect();
    let watch = unlimited
        .opf
        .load_buses
        .iter()
        .position(|&b| b == cfg.watch_bus)
        .expect("watch bus is a load bus");
    let nl = unlimited.opf.num_loads();

    let solve_point = |&(s1, s2): &(f64, f64)| -> Result<SweepPoint, Error> {
        let opf = limited
            .opf
            .with_limit(cfg.branches[0], Some(base_limits.0 * s1))?
            .with_limit(cfg.branches[1], Some(base_limits.1 * s2))?;
        let sol = solve_reduced_with(&opf, &solver)?;
        let report = MarginalReport::new(&opf, &sol).ok();
        let check = report
            .as_ref()
            .map(|r| congestion_bound_check(r, &reference).expect("reference has no binding branch"));
        let watch_delta = report.as_ref().map(|r| {
            (
                r.c_load[watch] - reference.c_load[watch],
                r.c_load[nl + watch] - reference.c_load[nl + watch],
            )
        });
        Ok(SweepPoint {
            scales: (s1, s2),
            status: sol.status,
            report,
            check,
            watch_delta,
        })
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CaseError::Argument(format!("worker pool: {e}")))?;
    let points = pool.install(|| grid.par_iter().map(solve_point).collect::<Result<Vec<_>, _>>())?;

    Ok(SweepResult {
        case: limited_case,
        reference,
        reference_solution,
        frozen,
        base_limits,
        points,
    })
}

impl SweepResult {
    pub fn all_hold(&self) -> bool {
        self.points.iter().all(|p| p.holds() == Some(true))
    }

    /// Writes `sweep.csv`. `holds` covers every load coordinate, while
    /// `dC_real` and `dC_reactive` are the signed changes at the watch bus.
    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# ldf-opf v1")?;
        writeln!(
            w,
            "scale_b1,scale_b2,dC_real,dC_reactive,bound,holds,status,n_binding,K,max_abs_dC"
        )?;
        for p in &self.points {
            let (s1, s2) = p.scales;
            match (&p.report, &p.check, p.watch_delta) {
                (Some(r), Some(c), Some((dr, dq))) => writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    sig(s1, 12),
                    sig(s2, 12),
                    sig(dr, 12),
                    sig(dq, 12),
                    sig(c.rhs, 12),
                    c.holds,
                    p.status,
                    r.binding_ids().len(),
                    r.k.map_or(String::new(), |k| sig(k, 12)),
                    sig(c.worst_lhs(), 12),
                )?,
                _ => writeln!(w, "{},{},,,,,{},,,", sig(s1, 12), sig(s2, 12), p.status)?,
            }
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::linspace;

    #[test]
    fn grid_endpoints() {
        assert_eq!(linspace(1.0, 0.75, 2), vec![1.0, 0.75]);
        assert_eq!(linspace(1.0, 0.75, 1), vec![1.0]);
        let g = linspace(1.0, 0.75, 20);
        assert_eq!((g.len(), g[0], g[19]), (20, 1.0, 0.75));
    }
}
