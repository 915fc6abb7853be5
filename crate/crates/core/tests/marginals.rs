use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use ldfopf::marginals::{
    bound_constant, congestion_bound_check, fd_gradient, Coordinate, Difference, MarginalError, MarginalReport,
};
use ldfopf::netcase::{read_case_file, Branch, Bus, BusKind, Generator, NetworkCase, Slack};
use ldfopf::validation::{compare_fd, fd_tolerance};
use ldfopf::Instance;
use ldfopf_conic::Status;

fn four_bus(limit: Option<f64>) -> Instance {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases/case4_example.json");
    let mut case = read_case_file(&path).unwrap();
    case.branches.iter_mut().find(|b| b.id == 2).unwrap().f_max = limit;
    Instance::new(case).unwrap()
}

fn report(inst: &Instance) -> MarginalReport {
    let sol = inst.solve().unwrap();
    assert_eq!(sol.status, Status::Optimal);
    MarginalReport::new(&inst.opf, &sol).unwrap()
}

/// Slack 0 feeds 1 and 4; bus 1 feeds generator 2 and load 3, bus 4 feeds
/// generator 5. Branch `k` ends at bus `k`.
fn six_bus(limit: Option<(usize, f64)>) -> NetworkCase {
    let bus = |id, kind, pd, qd| Bus {
        id,
        kind,
        v_min: 0.9,
        v_max: 1.1,
        p_demand: pd,
        q_demand: qd,
    };
    let branch = |id, from| Branch {
        id,
        from_bus: from,
        to_bus: id,
        r: 0.01,
        x: 0.02,
        f_max: None,
    };
    let generator = |b, p_max, cost| Generator {
        bus: b,
        p_min: 0.0,
        p_max,
        q_min: -0.2,
        q_max: 0.2,
        cost,
    };
    let mut case = NetworkCase {
        base_mva: 1.0,
        slack: Slack {
            bus: 0,
            v0: 1.0,
            p_min: 0.0,
            p_max: 5.0,
            q_min: -5.0,
            q_max: 5.0,
            cost: 3.0,
        },
        buses: vec![
            bus(0, BusKind::Slack, 0.0, 0.0),
            bus(1, BusKind::Load, 0.3, 0.1),
            bus(2, BusKind::Generator, 0.0, 0.0),
            bus(3, BusKind::Load, 0.2, 0.05),
            bus(4, BusKind::Load, 0.25, 0.1),
            bus(5, BusKind::Generator, 0.0, 0.0),
        ],
        branches: vec![branch(1, 0), branch(2, 1), branch(3, 1), branch(4, 0), branch(5, 4)],
        generators: vec![generator(2, 0.6, 1.0), generator(5, 0.2, 2.0)],
    };
    if let Some((id, f_max)) = limit {
        case.branches.iter_mut().find(|b| b.id == id).unwrap().f_max = Some(f_max);
    }
    case
}

/// The six-bus case with the limit of `branch` set to `scale` times its
/// unlimited flow, together with the unlimited case.
fn six_bus_pair(branch: usize, scale: f64) -> (Instance, Instance) {
    let free = Instance::new(six_bus(None)).unwrap();
    let sol = free.solve().unwrap();
    let j = free.topo.branch_index(branch).unwrap();
    let (y, z) = free.opf.flow(j, &sol.p_g, &sol.q_g);
    (
        Instance::new(six_bus(Some((branch, scale * y.hypot(z))))).unwrap(),
        free,
    )
}

/// Closed-form price shifts against differences of finite-difference
/// gradients from the two problems.
fn assert_shift_matches_fd(limited: &Instance, free: &Instance, congested: &MarginalReport, baseline: &MarginalReport) {
    for i in 0..2 * limited.opf.num_loads() {
        let a = fd_gradient(&limited.opf, Coordinate::Load(i), 1e-4).unwrap();
        let b = fd_gradient(&free.opf, Coordinate::Load(i), 1e-4).unwrap();
        assert!(!a.kink && !b.kink);
        let closed = congested.c_load[i] - baseline.c_load[i];
        let numeric = a.value - b.value;
        assert!(
            (closed - numeric).abs() <= fd_tolerance(closed),
            "{i}: {closed} vs {numeric}"
        );
    }
}

#[test]
fn bound_constant_of_four_bus() {
    let inst = four_bus(Some(0.45));
    let r = report(&inst);
    assert_eq!(r.binding_ids(), vec![2]);
    assert_abs_diff_eq!(r.k.unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    let j2 = inst.topo.branch_index(2).unwrap();
    assert_eq!(bound_constant(&inst.opf, &[j2]).unwrap(), 2f64.sqrt());
    assert_eq!(bound_constant(&inst.opf, &[]), Err(MarginalError::EmptyBindingSet));
}

#[test]
fn bound_constant_matches_direct_computation() {
    let inst = Instance::new(ldfopf::netcase::random_case(&ldfopf::netcase::RandomCaseSpec {
        buses: 40,
        generators: 8,
        seed: 11,
    }))
    .unwrap();
    let set: Vec<usize> = (0..inst.topo.n()).step_by(3).collect();
    let expected = set
        .iter()
        .map(|&j| {
            let downstream_loads = inst
                .ldf
                .partition
                .loads
                .iter()
                .filter(|&&b| inst.topo.is_downstream(j, b))
                .count() as f64;
            2f64.sqrt() * downstream_loads
        })
        .fold(0.0, f64::max);
    assert_abs_diff_eq!(bound_constant(&inst.opf, &set).unwrap(), expected, epsilon = 1e-12);
}

#[test]
fn uncongested_prices_are_the_baseline() {
    let r = report(&four_bus(None));
    assert!(r.binding_ids().is_empty());
    assert_eq!(r.c_load, r.baseline);
    assert_eq!(r.bound_value, 0.0);
    assert!(r.c_flow.iter().all(|&c| c == 0.0));
}

#[test]
fn congested_prices_match_finite_differences() {
    let inst = four_bus(Some(0.45));
    let r = report(&inst);
    assert!(r.c_flow.iter().all(|&c| c <= 1e-9));
    let fd = compare_fd(&inst, &r, &(0..4).collect::<Vec<_>>());
    assert_eq!((fd.compared, fd.skipped_kinks), (5, 0));
    assert!(fd.failures.is_empty(), "{:?}", fd.failures);
}

#[test]
fn congestion_bound_on_four_bus() {
    let congested = report(&four_bus(Some(0.45)));
    let free = report(&four_bus(None));
    let check = congestion_bound_check(&congested, &free).unwrap();
    assert!(check.holds, "{check:?}");
    assert!(check.worst_lhs() > 0.1, "the limit should move some price");
    assert_eq!(
        congestion_bound_check(&free, &congested),
        Err(MarginalError::CongestedReference(vec![2]))
    );
}

#[test]
fn limit_at_the_free_flow_sits_on_a_breakpoint() {
    let free = four_bus(None);
    let sol = free.solve().unwrap();
    let j2 = free.topo.branch_index(2).unwrap();
    let (y, z) = free.opf.flow(j2, &sol.p_g, &sol.q_g);
    let inst = four_bus(Some(y.hypot(z)));
    let r = report(&inst);
    let b = &r.branches[0];
    assert!(b.primal);
    // The multiplier is not unique here, so the dual side may or may not
    // call it binding; either way the value function has a kink.
    let fd = fd_gradient(&inst.opf, Coordinate::Limit(2), 1e-4).unwrap();
    assert!(fd.kink, "{fd:?}");
}

#[test]
fn infeasible_side_gives_a_one_sided_difference() {
    // below about 0.3577700 no dispatch keeps branch 2 within its limit
    let threshold = 0.128f64.sqrt();
    let inst = four_bus(Some(threshold + 5e-5));
    let fd = fd_gradient(&inst.opf, Coordinate::Limit(2), 1e-4).unwrap();
    assert_eq!(fd.difference, Difference::Forward);
    let r = report(&inst);
    assert!(r.c_flow[inst.topo.branch_index(2).unwrap()] < 0.0);

    let far = four_bus(Some(0.2));
    assert_eq!(far.solve().unwrap().status, Status::PrimalInfeasible);
    assert_eq!(
        fd_gradient(&far.opf, Coordinate::Limit(2), 1e-4),
        Err(MarginalError::BothSidesInfeasible)
    );
}

#[test]
fn six_bus_price_shift_two_ways() {
    // branch 4 feeds load 4 and generator 5
    let (limited, free) = six_bus_pair(4, 0.5);
    let congested = report(&limited);
    let baseline = report(&free);
    assert_eq!(congested.binding_ids(), vec![4]);
    assert_eq!(congested.k, Some(2f64.sqrt()));
    let check = congestion_bound_check(&congested, &baseline).unwrap();
    assert!(check.holds, "{check:?}");
    assert!(check.worst_lhs() > 0.5);
    assert_shift_matches_fd(&limited, &free, &congested, &baseline);
}

#[test]
fn bound_misses_price_shift_behind_generation_only_branch() {
    // Branch 2 has only generator 2 downstream, so s_2 = t_2 = 0 and K = 0.
    // Limiting it still moves every real price by one unit: the cheap
    // generator is capped and the dearer one at bus 5 becomes marginal.
    // The flow terms are then zero and the whole shift comes from λ.
    let (limited, free) = six_bus_pair(2, 0.8);
    let congested = report(&limited);
    let baseline = report(&free);
    assert_eq!(congested.binding_ids(), vec![2]);
    assert_eq!(congested.k, Some(0.0));
    let check = congestion_bound_check(&congested, &baseline).unwrap();
    assert_eq!(check.rhs, 0.0);
    assert!(!check.holds);
    for d in check.lhs_real.iter() {
        assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-6);
    }
    assert_shift_matches_fd(&limited, &free, &congested, &baseline);
}

#[test]
fn csv_report_lists_loads_and_branches() {
    let inst = four_bus(Some(0.45));
    let r = report(&inst);
    let dir = std::env::temp_dir().join(format!("ldfopf-marginals-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("marginals.csv");
    r.write_csv(&inst.opf, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "# ldf-opf v1");
    assert_eq!(lines.len(), 2 + 4 + 1);
    assert!(lines[2].starts_with("load,2,real,"));
    assert!(lines[6].starts_with("branch,2,"));
    assert!(lines[6].contains(",true,"));
    std::fs::remove_dir_all(dir).unwrap();
}
