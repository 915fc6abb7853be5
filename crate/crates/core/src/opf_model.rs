//! The OPF in generator variables only.
//!
//! Eliminating voltages, slack injections and load injections from the
//! full LinDistFlow OPF leaves
//!
//! ```text
//! min  c̃ᵀ p_g
//! s.t. M_p p_g + M_q q_g ≤ G ℓ + h
//!      p̲ ≤ p_g ≤ p̄,  q̲ ≤ q_g ≤ q̄
//!      ‖(r_jᵀ p_g + s_jᵀ ℓ,  r_jᵀ q_g + t_jᵀ ℓ)‖ ≤ f̄_j   for limited branches j
//! ```
//!
//! with `c̃ = c_g − c_s·1` and `ℓ = [p̂_l; q̂_l]` the load *injections*
//! (negative demand). The dropped objective term `−c_s·1ᵀp̂_l` is kept as
//! [`ReducedOpf::constant_offset`] so reported costs match the full problem.
//!
//! The dual used throughout has multipliers `λ ≥ 0` for the linear rows,
//! `α_lb, α_ub, β_lb, β_ub ≥ 0` for the generator bounds and
//! `(μ_j, θ_j, φ_j)` with `‖(θ_j, φ_j)‖ ≤ μ_j` per limited branch, and
//! stationarity
//!
//! ```text
//! c̃ + M_pᵀλ + α_ub − α_lb − Σ θ_j r_j = 0
//!     M_qᵀλ + β_ub − β_lb − Σ φ_j r_j = 0
//! ```
//!
//! Both conditions carry `r_j`: the reactive flow depends on `q_g` through
//! `r_j`, so that is what differentiating the Lagrangian in `q_g` yields.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::fmt::sig;
use crate::ldf::LdfModel;
use crate::netcase::{BranchId, BusId, NetworkCase, RadialTopology};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("slack voltage {v0} lies outside its bus limits [{v_min}, {v_max}]")]
    SlackVoltage { v0: f64, v_min: f64, v_max: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
}

/// Meaning of one row of `M_p p_g + M_q q_g ≤ G ℓ + h`. Rows appear in
/// this order: all voltage upper limits, all voltage lower limits, then the
/// slack real upper, real lower, reactive upper and reactive lower limits.
/// Rows whose bound is infinite are left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `v_i ≤ v̄_i` for internal bus `i`.
    VoltageUpper(usize),
    /// `−v_i ≤ −v̲_i`.
    VoltageLower(usize),
    SlackRealUpper,
    SlackRealLower,
    SlackReactiveUpper,
    SlackReactiveLower,
}

impl RowKind {
    pub fn label(&self, topo_ids: &[BusId]) -> String {
        match self {
            RowKind::VoltageUpper(i) => format!("v_max[{}]", topo_ids[*i]),
            RowKind::VoltageLower(i) => format!("v_min[{}]", topo_ids[*i]),
            RowKind::SlackRealUpper => "p_s_max".into(),
            RowKind::SlackRealLower => "p_s_min".into(),
            RowKind::SlackReactiveUpper => "q_s_max".into(),
            RowKind::SlackReactiveLower => "q_s_min".into(),
        }
    }
}

/// Flow limit on the branch with internal index `branch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLimit {
    pub branch: usize,
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOpf {
    pub c_tilde: DVector<f64>,
    pub m_p: DMatrix<f64>,
    pub m_q: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub rows: Vec<RowKind>,
    pub p_min: DVector<f64>,
    pub p_max: DVector<f64>,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    /// Limited branches, by increasing internal index.
    pub limits: Vec<FlowLimit>,
    /// `r_j` for every branch, by internal index.
    pub r: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub t: Vec<DVector<f64>>,
    pub ell: DVector<f64>,
    pub slack_cost: f64,
    /// Squared-voltage limits per internal bus; used to spot pinned voltages.
    pub v_min: DVector<f64>,
    pub v_max: DVector<f64>,
    pub gen_buses: Vec<BusId>,
    pub load_buses: Vec<BusId>,
    pub bus_ids: Vec<BusId>,
    pub branch_ids: Vec<BranchId>,
}

pub fn reduce(case: &NetworkCase, topo: &RadialTopology, ldf: &LdfModel) -> Result<ReducedOpf, ModelError> {
    let slack_bus = case.bus(case.slack.bus).expect("validated case has its slack bus");
    let v0 = case.slack.v0;
    if v0 < slack_bus.v_min || v0 > slack_bus.v_max {
        return Err(ModelError::SlackVoltage {
            v0,
            v_min: slack_bus.v_min,
            v_max: slack_bus.v_max,
        });
    }

    let n = topo.n();
    let gens = &ldf.partition.gens;
    let loads = &ldf.partition.loads;
    let (ng, nl) = (gens.len(), loads.len());
    let bus = |i: usize| case.bus(topo.bus_id(i)).expect("topology buses come from the case");

    let mut c_tilde = DVector::zeros(ng);
    let mut p_min = DVector::zeros(ng);
    let mut p_max = DVector::zeros(ng);
    let mut q_min = DVector::zeros(ng);
    let mut q_max = DVector::zeros(ng);
    for (k, &i) in gens.iter().enumerate() {
        let g = case
            .generator_at(topo.bus_id(i))
            .expect("generator buses have a generator");
        c_tilde[k] = g.cost - case.slack.cost;
        p_min[k] = g.p_min;
        p_max[k] = g.p_max;
        q_min[k] = g.q_min;
        q_max[k] = g.q_max;
    }
    let mut ell = DVector::zeros(2 * nl);
    for (l, &i) in loads.iter().enumerate() {
        ell[l] = -bus(i).p_demand;
        ell[nl + l] = -bus(i).q_demand;
    }
    let v_min = DVector::from_fn(n, |i, _| bus(i).v_min);
    let v_max = DVector::from_fn(n, |i, _| bus(i).v_max);

    let mut rows = Vec::new();
    let mut mp_rows: Vec<DVector<f64>> = Vec::new();
    let mut mq_rows: Vec<DVector<f64>> = Vec::new();
    let mut g_rows: Vec<DVector<f64>> = Vec::new();
    let mut h = Vec::new();
    // v = R_g p_g + X_g q_g + L ℓ + v0 with L = [R_l, X_l]
    let voltage_row = |i: usize| {
        let mp = DVector::from_fn(ng, |k, _| ldf.r[(i, gens[k])]);
        let mq = DVector::from_fn(ng, |k, _| ldf.x[(i, gens[k])]);
        let l = DVector::from_fn(2 * nl, |c, _| {
            if c < nl {
                ldf.r[(i, loads[c])]
            } else {
                ldf.x[(i, loads[c - nl])]
            }
        });
        (mp, mq, l)
    };
    for i in 0..n {
        if v_max[i].is_finite() {
            let (mp, mq, l) = voltage_row(i);
            rows.push(RowKind::VoltageUpper(i));
            mp_rows.push(mp);
            mq_rows.push(mq);
            g_rows.push(-l);
            h.push(v_max[i] - v0);
        }
    }
    for i in 0..n {
        if v_min[i].is_finite() {
            let (mp, mq, l) = voltage_row(i);
            rows.push(RowKind::VoltageLower(i));
            mp_rows.push(-mp);
            mq_rows.push(-mq);
            g_rows.push(l);
            h.push(v0 - v_min[i]);
        }
    }
    // p_s = −1ᵀp_g − 1ᵀp̂_l and q_s = −1ᵀq_g − 1ᵀq̂_l
    let ones = DVector::from_element(ng, 1.0);
    let zeros = DVector::zeros(ng);
    let real = DVector::from_fn(2 * nl, |c, _| if c < nl { 1.0 } else { 0.0 });
    let reactive = DVector::from_fn(2 * nl, |c, _| if c < nl { 0.0 } else { 1.0 });
    let s = &case.slack;
    let slack_rows = [
        (
            RowKind::SlackRealUpper,
            s.p_max,
            -&ones,
            zeros.clone(),
            real.clone(),
            s.p_max,
        ),
        (
            RowKind::SlackRealLower,
            s.p_min,
            ones.clone(),
            zeros.clone(),
            -&real,
            -s.p_min,
        ),
        (
            RowKind::SlackReactiveUpper,
            s.q_max,
            zeros.clone(),
            -&ones,
            reactive.clone(),
            s.q_max,
        ),
        (
            RowKind::SlackReactiveLower,
            s.q_min,
            zeros.clone(),
            ones.clone(),
            -&reactive,
            -s.q_min,
        ),
    ];
    for (kind, bound, mp, mq, g, hv) in slack_rows {
        if bound.is_finite() {
            rows.push(kind);
            mp_rows.push(mp);
            mq_rows.push(mq);
            g_rows.push(g);
            h.push(hv);
        }
    }

    let m = rows.len();
    let stack = |vs: &[DVector<f64>], cols: usize| DMatrix::from_fn(m, cols, |i, j| vs[i][j]);
    let limits = (0..n)
        .filter_map(|j| {
            case.branches[topo.branch_position(j)]
                .f_max
                .map(|f_max| FlowLimit { branch: j, f_max })
        })
        .collect();

    Ok(ReducedOpf {
        c_tilde,
        m_p: stack(&mp_rows, ng),
        m_q: stack(&mq_rows, ng),
        g: stack(&g_rows, 2 * nl),
        h: DVector::from_vec(h),
        rows,
        p_min,
        p_max,
        q_min,
        q_max,
        limits,
        r: ldf.coeffs.r.clone(),
        s: ldf.coeffs.s.clone(),
        t: ldf.coeffs.t.clone(),
        ell,
        slack_cost: case.slack.cost,
        v_min,
        v_max,
        gen_buses: gens.iter().map(|&i| topo.bus_id(i)).collect(),
        load_buses: loads.iter().map(|&i| topo.bus_id(i)).collect(),
        bus_ids: topo.bus_ids().to_vec(),
        branch_ids: (0..n).map(|j| topo.branch_id(j)).collect(),
    })
}

/// Multipliers of the reduced problem; `theta`, `phi`, `mu` follow
/// [`ReducedOpf::limits`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: DVector<f64>,
    pub alpha_lb: DVector<f64>,
    pub alpha_ub: DVector<f64>,
    pub beta_lb: DVector<f64>,
    pub beta_ub: DVector<f64>,
    pub theta: DVector<f64>,
    pub phi: DVector<f64>,
    pub mu: DVector<f64>,
}

impl DualSolution {
    pub fn zeros(opf: &ReducedOpf) -> Self {
        let ng = opf.num_generators();
        let k = opf.limits.len();
        DualSolution {
            lambda: DVector::zeros(opf.num_rows()),
            alpha_lb: DVector::zeros(ng),
            alpha_ub: DVector::zeros(ng),
            beta_lb: DVector::zeros(ng),
            beta_ub: DVector::zeros(ng),
            theta: DVector::zeros(k),
            phi: DVector::zeros(k),
            mu: DVector::zeros(k),
        }
    }
}

/// Worst violation of each dual condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualResiduals {
    /// Real-power stationarity, ∞-norm.
    pub stationarity_p: f64,
    /// Reactive-power stationarity, ∞-norm.
    pub stationarity_q: f64,
    /// `max_j (‖(θ_j, φ_j)‖ − μ_j)⁺`.
    pub cone: f64,
    /// Largest negative part of any sign-constrained multiplier.
    pub negativity: f64,
    /// Largest multiplier on a bound that is infinite.
    pub unbounded: f64,
}

impl DualResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_p
            .max(self.stationarity_q)
            .max(self.cone)
            .max(self.negativity)
            .max(self.unbounded)
    }
}

impl ReducedOpf {
    pub fn num_generators(&self) -> usize {
        self.c_tilde.len()
    }

    pub fn num_loads(&self) -> usize {
        self.ell.len() / 2
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `−c_s·1ᵀp̂_l`, the objective term removed by the reduction.
    pub fn constant_offset(&self) -> f64 {
        -self.slack_cost * self.ell.rows(0, self.num_loads()).sum()
    }

    /// `c̃ᵀp_g`, the optimal-value operator without the constant.
    pub fn operator_value(&self, p_g: &DVector<f64>) -> f64 {
        self.c_tilde.dot(p_g)
    }

    /// `c̃ᵀp_g` plus the constant: the full-problem objective.
    pub fn primal_objective(&self, p_g: &DVector<f64>) -> f64 {
        self.operator_value(p_g) + self.constant_offset()
    }

    /// Flow `(y_j, z_j)` on branch `j` (internal index).
    pub fn flow(&self, j: usize, p_g: &DVector<f64>, q_g: &DVector<f64>) -> (f64, f64) {
        (
            self.r[j].dot(p_g) + self.s[j].dot(&self.ell),
            self.r[j].dot(q_g) + self.t[j].dot(&self.ell),
        )
    }

    /// Dual objective without the constant.
    pub fn dual_operator_value(&self, d: &DualSolution) -> f64 {
        let mut val = -(&self.g * &self.ell + &self.h).dot(&d.lambda);
        for k in 0..self.num_generators() {
            val += bound_term(d.alpha_lb[k], self.p_min[k]) - bound_term(d.alpha_ub[k], self.p_max[k]);
            val += bound_term(d.beta_lb[k], self.q_min[k]) - bound_term(d.beta_ub[k], self.q_max[k]);
        }
        for (k, lim) in self.limits.iter().enumerate() {
            let j = lim.branch;
            val -= (&self.s[j] * d.theta[k] + &self.t[j] * d.phi[k]).dot(&self.ell);
            val -= d.mu[k] * lim.f_max;
        }
        val
    }

    pub fn dual_value(&self, d: &DualSolution) -> f64 {
        self.dual_operator_value(d) + self.constant_offset()
    }

    pub fn check_dual_feasible(&self, d: &DualSolution) -> DualResiduals {
        let mut sp = &self.c_tilde + self.m_p.tr_mul(&d.lambda) + &d.alpha_ub - &d.alpha_lb;
        let mut sq = self.m_q.tr_mul(&d.lambda) + &d.beta_ub - &d.beta_lb;
        let mut cone: f64 = 0.0;
        for (k, lim) in self.limits.iter().enumerate() {
            sp -= &self.r[lim.branch] * d.theta[k];
            sq -= &self.r[lim.branch] * d.phi[k];
            cone = cone.max(d.theta[k].hypot(d.phi[k]) - d.mu[k]);
        }
        let signed = [&d.lambda, &d.alpha_lb, &d.alpha_ub, &d.beta_lb, &d.beta_ub, &d.mu];
        let negativity = signed
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |acc, &x| acc.max(-x));
        let mut unbounded: f64 = 0.0;
        for k in 0..self.num_generators() {
            for (mult, bound) in [
                (d.alpha_lb[k], self.p_min[k]),
                (d.alpha_ub[k], self.p_max[k]),
                (d.beta_lb[k], self.q_min[k]),
                (d.beta_ub[k], self.q_max[k]),
            ] {
                if !bound.is_finite() {
                    unbounded = unbounded.max(mult.abs());
                }
            }
        }
        DualResiduals {
            stationarity_p: sp.amax(),
            stationarity_q: sq.amax(),
            cone: cone.max(0.0),
            negativity,
            unbounded,
        }
    }

    /// Largest violation of any primal constraint at `(p_g, q_g)`.
    pub fn primal_violation(&self, p_g: &DVector<f64>, q_g: &DVector<f64>) -> f64 {
        let lhs = &self.m_p * p_g + &self.m_q * q_g;
        let rhs = &self.g * &self.ell + &self.h;
        let mut worst = (lhs - rhs).max().max(0.0);
        for k in 0..self.num_generators() {
            worst = worst
                .max(self.p_min[k] - p_g[k])
                .max(p_g[k] - self.p_max[k])
                .max(self.q_min[k] - q_g[k])
                .max(q_g[k] - self.q_max[k]);
        }
        for lim in &self.limits {
            let (y, z) = self.flow(lim.branch, p_g, q_g);
            worst = worst.max(y.hypot(z) - lim.f_max);
        }
        worst
    }

    /// Largest complementarity product over all constraints.
    pub fn complementarity(&self, p_g: &DVector<f64>, q_g: &DVector<f64>, d: &DualSolution) -> f64 {
        let slack = &self.g * &self.ell + &self.h - &self.m_p * p_g - &self.m_q * q_g;
        let mut worst = slack.component_mul(&d.lambda).amax();
        for k in 0..self.num_generators() {
            for (mult, gap) in [
                (d.alpha_lb[k], p_g[k] - self.p_min[k]),
                (d.alpha_ub[k], self.p_max[k] - p_g[k]),
                (d.beta_lb[k], q_g[k] - self.q_min[k]),
                (d.beta_ub[k], self.q_max[k] - q_g[k]),
            ] {
                if gap.is_finite() {
                    worst = worst.max((mult * gap).abs());
                }
            }
        }
        for (k, lim) in self.limits.iter().enumerate() {
            let (y, z) = self.flow(lim.branch, p_g, q_g);
            worst = worst.max((d.mu[k] * lim.f_max + d.theta[k] * y + d.phi[k] * z).abs());
        }
        worst
    }

    /// Copy with a different demand vector `ℓ`.
    pub fn with_ell(&self, ell: DVector<f64>) -> Result<Self, ModelError> {
        if ell.len() != self.ell.len() {
            return Err(ModelError::Dimension(format!(
                "ℓ has length {}, expected {}",
                ell.len(),
                self.ell.len()
            )));
        }
        Ok(ReducedOpf { ell, ..self.clone() })
    }

    /// Copy with the limit of branch `id` set to `f_max` (`None` removes it).
    pub fn with_limit(&self, id: BranchId, f_max: Option<f64>) -> Result<Self, ModelError> {
        let j = self
            .branch_ids
            .iter()
            .position(|&b| b == id)
            .ok_or(ModelError::UnknownBranch(id))?;
        let mut out = self.clone();
        out.limits.retain(|l| l.branch != j);
        if let Some(f_max) = f_max {
            out.limits.push(FlowLimit { branch: j, f_max });
            out.limits.sort_by_key(|l| l.branch);
        }
        Ok(out)
    }

    /// Writes `reduced.csv`: one line per row of the linear block with its
    /// label, then `M_p`, `M_q`, `G` and `h`, followed by one `cost` line
    /// holding `c̃`.
    pub fn dump_csv(&self, dir: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(dir.join("reduced.csv"))?);
        writeln!(w, "# ldf-opf v1")?;
        let ng = self.num_generators();
        let nl = self.num_loads();
        let mut header = String::from("row");
        for k in 0..ng {
            write!(header, ",Mp[{}]", self.gen_buses[k]).unwrap();
        }
        for k in 0..ng {
            write!(header, ",Mq[{}]", self.gen_buses[k]).unwrap();
        }
        for axis in ["p", "q"] {
            for l in 0..nl {
                write!(header, ",G_{axis}[{}]", self.load_buses[l]).unwrap();
            }
        }
        header.push_str(",h");
        writeln!(w, "{header}")?;
        for (i, kind) in self.rows.iter().enumerate() {
            let mut line = kind.label(&self.bus_ids);
            let values = self
                .m_p
                .row(i)
                .iter()
                .chain(self.m_q.row(i).iter())
                .chain(self.g.row(i).iter())
                .chain(std::iter::once(&self.h[i]))
                .copied()
                .collect::<Vec<_>>();
            for v in values {
                write!(line, ",{}", sig(v, 17)).unwrap();
            }
            writeln!(w, "{line}")?;
        }
        let mut line = String::from("cost");
        for v in self.c_tilde.iter() {
            write!(line, ",{}", sig(*v, 17)).unwrap();
        }
        writeln!(w, "{line}")?;
        w.flush()
    }
}

fn bound_term(mult: f64, bound: f64) -> f64 {
    if bound.is_finite() {
        mult * bound
    } else {
        0.0
    }
}
