//! Oracles that work straight off the case tables, without the topology or
//! model code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use ldfopf::netcase::{BusId, BusKind, NetworkCase};

/// Parent bus and branch position of every non-slack bus, plus the buses in
/// breadth-first order from the slack.
pub struct Tree {
    pub parent: BTreeMap<BusId, (BusId, usize)>,
    pub order: Vec<BusId>,
}

impl Tree {
    pub fn new(case: &NetworkCase) -> Tree {
        let mut adj: BTreeMap<BusId, Vec<(BusId, usize)>> = BTreeMap::new();
        for (k, br) in case.branches.iter().enumerate() {
            adj.entry(br.from_bus).or_default().push((br.to_bus, k));
            adj.entry(br.to_bus).or_default().push((br.from_bus, k));
        }
        let mut parent = BTreeMap::new();
        let mut order = vec![case.slack.bus];
        let mut queue = VecDeque::from([case.slack.bus]);
        while let Some(b) = queue.pop_front() {
            for &(c, k) in adj.get(&b).into_iter().flatten() {
                if c != case.slack.bus && !parent.contains_key(&c) {
                    parent.insert(c, (b, k));
                    order.push(c);
                    queue.push_back(c);
                }
            }
        }
        Tree { parent, order }
    }

    /// Branch ids from `bus` up to the slack.
    pub fn path(&self, case: &NetworkCase, bus: BusId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut at = bus;
        while let Some(&(p, k)) = self.parent.get(&at) {
            out.push(case.branches[k].id);
            at = p;
        }
        out
    }

    /// Buses whose path to the slack uses branch `id`.
    pub fn subtree(&self, case: &NetworkCase, id: usize) -> Vec<BusId> {
        self.order
            .iter()
            .copied()
            .filter(|&b| self.path(case, b).contains(&id))
            .collect()
    }
}

/// Net injection at every bus for a dispatch given per generator bus.
pub fn injections(case: &NetworkCase, dispatch: &BTreeMap<BusId, (f64, f64)>) -> BTreeMap<BusId, (f64, f64)> {
    case.buses
        .iter()
        .filter(|b| b.kind != BusKind::Slack)
        .map(|b| {
            let inj = match b.kind {
                BusKind::Generator => dispatch[&b.id],
                _ => (-b.p_demand, -b.q_demand),
            };
            (b.id, inj)
        })
        .collect()
}

/// Squared voltages and branch flows by the branch recursion
/// `v_child = v_parent + 2(r·P + x·Q)`, with `P`, `Q` the injections summed
/// below the branch. Flows are keyed by branch id and signed toward the
/// slack.
pub struct PowerFlow {
    pub v: BTreeMap<BusId, f64>,
    pub flow: BTreeMap<usize, (f64, f64)>,
    pub slack: (f64, f64),
}

pub fn power_flow(case: &NetworkCase, tree: &Tree, inj: &BTreeMap<BusId, (f64, f64)>) -> PowerFlow {
    let mut below: BTreeMap<BusId, (f64, f64)> = inj.clone();
    for &b in tree.order.iter().rev() {
        if let Some(&(p, _)) = tree.parent.get(&b) {
            let (x, y) = below[&b];
            if p != case.slack.bus {
                let e = below.get_mut(&p).unwrap();
                e.0 += x;
                e.1 += y;
            }
        }
    }
    let mut v = BTreeMap::from([(case.slack.bus, case.slack.v0)]);
    let mut flow = BTreeMap::new();
    for &b in &tree.order[1..] {
        let (p, k) = tree.parent[&b];
        let br = &case.branches[k];
        let (sp, sq) = below[&b];
        v.insert(b, v[&p] + 2.0 * (br.r * sp + br.x * sq));
        flow.insert(br.id, (sp, sq));
    }
    let total = inj.values().fold((0.0, 0.0), |a, &(x, y)| (a.0 + x, a.1 + y));
    PowerFlow {
        v,
        flow,
        slack: (-total.0, -total.1),
    }
}

/// Cost of a dispatch under the full model, or `None` when some constraint
/// is violated by more than `tol`.
pub fn dispatch_cost(case: &NetworkCase, tree: &Tree, dispatch: &BTreeMap<BusId, (f64, f64)>, tol: f64) -> Option<f64> {
    for g in &case.generators {
        let (p, q) = dispatch[&g.bus];
        if p < g.p_min - tol || p > g.p_max + tol || q < g.q_min - tol || q > g.q_max + tol {
            return None;
        }
    }
    let pf = power_flow(case, tree, &injections(case, dispatch));
    for b in &case.buses {
        let v = pf.v[&b.id];
        if v < b.v_min - tol || v > b.v_max + tol {
            return None;
        }
    }
    for br in &case.branches {
        if let Some(f_max) = br.f_max {
            let (x, y) = pf.flow[&br.id];
            if x.hypot(y) > f_max + tol {
                return None;
            }
        }
    }
    let s = &case.slack;
    let (ps, qs) = pf.slack;
    if ps < s.p_min - tol || ps > s.p_max + tol || qs < s.q_min - tol || qs > s.q_max + tol {
        return None;
    }
    let gen_cost: f64 = case.generators.iter().map(|g| g.cost * dispatch[&g.bus].0).sum();
    Some(gen_cost + s.cost * ps)
}

/// Minimum cost over a one-generator case by a grid of spacing `step` over
/// the generator box, then three zooms onto the bounding box of the grid
/// points within one cell's worth of cost of the best, 101 points a side.
/// `None` when no grid point is feasible.
pub fn grid_search(case: &NetworkCase, step: f64) -> Option<(f64, f64, f64)> {
    assert_eq!(case.generators.len(), 1);
    let g = &case.generators[0];
    let tree = Tree::new(case);
    let eval = |p: f64, q: f64| dispatch_cost(case, &tree, &BTreeMap::from([(g.bus, (p, q))]), 1e-12);
    let axis = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..=k)
            .map(|i| {
                if k == 0 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / k as f64
                }
            })
            .collect()
    };
    let slope = (g.cost - case.slack.cost).abs();
    let cells = |lo: f64, hi: f64| ((hi - lo) / step).ceil() as usize;
    let (mut p_box, mut q_box) = ((g.p_min, g.p_max), (g.q_min, g.q_max));
    let (mut kp, mut kq) = (cells(g.p_min, g.p_max), cells(g.q_min, g.q_max));
    let mut best: Option<(f64, f64, f64)> = None;
    for _ in 0..4 {
        let ps = axis(p_box.0, p_box.1, kp);
        let qs = axis(q_box.0, q_box.1, kq);
        let hp = (p_box.1 - p_box.0) / kp.max(1) as f64;
        let hq = (q_box.1 - q_box.0) / kq.max(1) as f64;
        let pts: Vec<(f64, f64, f64)> = ps
            .iter()
            .flat_map(|&p| qs.iter().filter_map(move |&q| eval(p, q).map(|c| (c, p, q))))
            .collect();
        let level = pts.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0))?;
        if best.is_none_or(|b| level.0 < b.0) {
            best = Some(level);
        }
        let near: Vec<_> = pts.iter().filter(|t| t.0 <= level.0 + slope * hp + 1e-15).collect();
        let span = |f: fn(&&(f64, f64, f64)) -> f64, h: f64, lo: f64, hi: f64| {
            let a = near.iter().map(f).fold(f64::INFINITY, f64::min);
            let b = near.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            ((a - h).max(lo), (b + h).min(hi))
        };
        p_box = span(|t| t.1, hp, g.p_min, g.p_max);
        q_box = span(|t| t.2, hq, g.q_min, g.q_max);
        (kp, kq) = (100, 100);
    }
    best
}
