//! LinDistFlow sensitivities of a radial network.
//!
//! With `p`, `q` the net injections at the non-slack buses and `v` their
//! squared voltage magnitudes, the lossless model is
//!
//! ```text
//! v = R p + X q + v0·1,     f^p = F p,     f^q = F q
//! ```
//!
//! `R(i, j)` is twice the resistance shared by the paths from buses `i` and
//! `j` to the slack (likewise `X`), and `F(i, j) = -1` exactly when branch
//! `i` lies on the path from bus `j` to the slack.

use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::fmt::sig;
use crate::netcase::{BusKind, NetworkCase, RadialTopology};

/// Signed branch-bus incidence `Ã` (`n × (n+1)`, column 0 is the slack) and
/// the square matrix `A` obtained by dropping that column.
///
/// `Ã(i, j) = +1` if branch `i` leaves bus `j-1`, `-1` if it enters it.
pub fn build_incidence(topo: &RadialTopology) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = topo.n();
    let mut full = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        let from = topo.parent(i).map_or(0, |p| p + 1);
        full[(i, from)] = 1.0;
        full[(i, i + 1)] = -1.0;
    }
    let reduced = full.columns(1, n).into_owned();
    (full, reduced)
}

/// Flow matrix from the downstream sets: row `i` is `-1` on `H_i`.
pub fn build_f(topo: &RadialTopology) -> DMatrix<f64> {
    let n = topo.n();
    let mut f = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in topo.downstream(i) {
            f[(i, j)] = -1.0;
        }
    }
    f
}

pub fn build_rx(case: &NetworkCase, topo: &RadialTopology) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = topo.n();
    let mut r = DMatrix::zeros(n, n);
    let mut x = DMatrix::zeros(n, n);
    for k in 0..n {
        let br = &case.branches[topo.branch_position(k)];
        let set = topo.downstream(k);
        for &a in set {
            for &b in set {
                r[(a, b)] += 2.0 * br.r;
                x[(a, b)] += 2.0 * br.x;
            }
        }
    }
    (r, x)
}

/// Generator and load buses as internal indices, in internal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub gens: Vec<usize>,
    pub loads: Vec<usize>,
}

impl Partition {
    pub fn new(case: &NetworkCase, topo: &RadialTopology) -> Self {
        let mut gens = Vec::new();
        let mut loads = Vec::new();
        for i in 0..topo.n() {
            let bus = case.bus(topo.bus_id(i)).expect("topology buses come from the case");
            match bus.kind {
                BusKind::Generator => gens.push(i),
                BusKind::Load => loads.push(i),
                BusKind::Slack => unreachable!("the slack has no internal index"),
            }
        }
        Partition { gens, loads }
    }
}

/// Per-branch coefficients of the flow cone: the flow on branch `j` is
/// `(r_jᵀ p_g + s_jᵀ ℓ, r_jᵀ q_g + t_jᵀ ℓ)` with `ℓ = [p̂_l; q̂_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCoefficients {
    pub r: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub t: Vec<DVector<f64>>,
}

pub fn branch_coefficients(topo: &RadialTopology, part: &Partition) -> BranchCoefficients {
    let n = topo.n();
    let ng = part.gens.len();
    let nl = part.loads.len();
    let mut out = BranchCoefficients {
        r: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
    };
    for j in 0..n {
        let mut r = DVector::zeros(ng);
        let mut s = DVector::zeros(2 * nl);
        let mut t = DVector::zeros(2 * nl);
        for (g, &bus) in part.gens.iter().enumerate() {
            if topo.is_downstream(j, bus) {
                r[g] = -1.0;
            }
        }
        for (l, &bus) in part.loads.iter().enumerate() {
            if topo.is_downstream(j, bus) {
                s[l] = -1.0;
                t[nl + l] = -1.0;
            }
        }
        out.r.push(r);
        out.s.push(s);
        out.t.push(t);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdfModel {
    pub r: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub v0: f64,
    pub partition: Partition,
    pub coeffs: BranchCoefficients,
}

impl LdfModel {
    pub fn new(case: &NetworkCase, topo: &RadialTopology) -> Self {
        let (r, x) = build_rx(case, topo);
        let partition = Partition::new(case, topo);
        let coeffs = branch_coefficients(topo, &partition);
        LdfModel {
            r,
            x,
            f: build_f(topo),
            v0: case.slack.v0,
            partition,
            coeffs,
        }
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Squared voltages for bus injections `p`, `q`.
    pub fn voltages(&self, p: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        (&self.r * p + &self.x * q).add_scalar(self.v0)
    }

    /// Branch flows `(F p, F q)`.
    pub fn flows(&self, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.f * p, &self.f * q)
    }

    /// Writes `R.csv`, `X.csv` and `F.csv` (row-major, 17 significant digits).
    pub fn dump_csv(&self, dir: &Path) -> io::Result<()> {
        for (name, m) in [("R.csv", &self.r), ("X.csv", &self.x), ("F.csv", &self.f)] {
            let mut w = io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| sig(m[(i, j)], 17)).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::{random_case, validate_radial, RandomCaseSpec};

    #[test]
    fn single_branch() {
        let mut case = random_case(&RandomCaseSpec {
            buses: 1,
            generators: 0,
            seed: 0,
        });
        case.branches[0].r = 0.01;
        case.branches[0].x = 0.02;
        let topo = validate_radial(&case).unwrap();
        let (_, a) = build_incidence(&topo);
        assert_eq!(a, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(build_f(&topo), DMatrix::from_element(1, 1, -1.0));
        let (r, x) = build_rx(&case, &topo);
        assert_eq!((r[(0, 0)], x[(0, 0)]), (0.02, 0.04));
    }

    #[test]
    fn f_is_inverse_transpose_of_a() {
        let case = random_case(&RandomCaseSpec {
            buses: 50,
            generators: 10,
            seed: 4,
        });
        let topo = validate_radial(&case).unwrap();
        let (_, a) = build_incidence(&topo);
        let inv = a.clone().try_inverse().unwrap();
        assert!((&a * &inv - DMatrix::identity(50, 50)).amax() < 1e-12);
        assert!(inv.iter().all(|&v| (v + 1.0).abs() < 1e-12 || v.abs() < 1e-12));
        assert!((inv.transpose() - build_f(&topo)).amax() < 1e-10);
    }
}
