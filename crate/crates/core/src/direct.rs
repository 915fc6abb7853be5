//! The OPF with every LinDistFlow variable kept explicit.
//!
//! Variables are `[p; q; v; p_s; q_s; f^p; f^q]` over the non-slack buses.
//! Nothing is eliminated: the voltage, balance, load and flow relations are
//! equality rows. Solving this and the reduced problem must give the same
//! optimal cost, which makes it a cross-check on the reduction.

use ldfopf_conic::{ConicSolver, InteriorPoint, Status};
use nalgebra::DVector;

use crate::assemble::{Builder, SolveError};
use crate::Instance;

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub status: Status,
    pub objective: f64,
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub p_s: f64,
    pub q_s: f64,
}

pub fn solve_direct(inst: &Instance) -> Result<DirectSolution, SolveError> {
    solve_direct_with(inst, &InteriorPoint::default())
}

pub fn solve_direct_with(inst: &Instance, solver: &dyn ConicSolver) -> Result<DirectSolution, SolveError> {
    let n = inst.topo.n();
    let (ip, iq, iv, ips, iqs, ifp, ifq) = (0, n, 2 * n, 3 * n, 3 * n + 1, 3 * n + 2, 4 * n + 2);
    let nv = 5 * n + 2;
    let case = &inst.case;
    let ldf = &inst.ldf;
    let mut b = Builder::new(nv);
    let row = |entries: &[(usize, f64)]| {
        let mut r = vec![0.0; nv];
        for &(k, v) in entries {
            r[k] += v;
        }
        r
    };

    // v − R p − X q = v0
    for i in 0..n {
        let mut e = vec![(iv + i, 1.0)];
        for j in 0..n {
            e.push((ip + j, -ldf.r[(i, j)]));
            e.push((iq + j, -ldf.x[(i, j)]));
        }
        b.eq(row(&e), ldf.v0);
    }
    // power balance: p_s + 1ᵀp = 0, q_s + 1ᵀq = 0
    let mut e: Vec<_> = (0..n).map(|j| (ip + j, 1.0)).collect();
    e.push((ips, 1.0));
    b.eq(row(&e), 0.0);
    let mut e: Vec<_> = (0..n).map(|j| (iq + j, 1.0)).collect();
    e.push((iqs, 1.0));
    b.eq(row(&e), 0.0);
    // f = F p, f = F q
    for i in 0..n {
        let mut ep = vec![(ifp + i, 1.0)];
        let mut eq = vec![(ifq + i, 1.0)];
        for j in 0..n {
            if ldf.f[(i, j)] != 0.0 {
                ep.push((ip + j, -ldf.f[(i, j)]));
                eq.push((iq + j, -ldf.f[(i, j)]));
            }
        }
        b.eq(row(&ep), 0.0);
        b.eq(row(&eq), 0.0);
    }

    let mut c = DVector::zeros(nv);
    c[ips] = case.slack.cost;
    for i in 0..n {
        let bus = case
            .bus(inst.topo.bus_id(i))
            .expect("topology buses come from the case");
        b.range(row(&[(iv + i, 1.0)]), bus.v_max, -bus.v_min);
        match case.generator_at(bus.id) {
            Some(g) => {
                c[ip + i] = g.cost;
                b.range(row(&[(ip + i, 1.0)]), g.p_max, -g.p_min);
                b.range(row(&[(iq + i, 1.0)]), g.q_max, -g.q_min);
            }
            None => {
                b.eq(row(&[(ip + i, 1.0)]), -bus.p_demand);
                b.eq(row(&[(iq + i, 1.0)]), -bus.q_demand);
            }
        }
    }
    let s = &case.slack;
    b.range(row(&[(ips, 1.0)]), s.p_max, -s.p_min);
    b.range(row(&[(iqs, 1.0)]), s.q_max, -s.q_min);

    for i in 0..n {
        if let Some(f_max) = case.branches[inst.topo.branch_position(i)].f_max {
            b.soc([
                (vec![0.0; nv], f_max),
                (row(&[(ifp + i, -1.0)]), 0.0),
                (row(&[(ifq + i, -1.0)]), 0.0),
            ]);
        }
    }

    let (program, _) = b.build(c)?;
    let res = solver.solve(&program)?;
    let x = &res.x;
    Ok(DirectSolution {
        status: res.status,
        objective: res.objective,
        p: x.rows(ip, n).into_owned(),
        q: x.rows(iq, n).into_owned(),
        v: x.rows(iv, n).into_owned(),
        p_s: x[ips],
        q_s: x[iqs],
    })
}
