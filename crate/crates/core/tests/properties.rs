mod common;

use std::collections::BTreeSet;

use ldfopf::marginals::MarginalReport;
use ldfopf::netcase::{emit_native_case, parse_native_case, random_case, RandomCaseSpec};
use ldfopf::validation::{min_eigenvalues, norm_identity_failures};
use ldfopf::Instance;
use ldfopf_conic::Status;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::Tree;

fn spec() -> impl Strategy<Value = RandomCaseSpec> {
    (1usize..200, any::<u64>()).prop_flat_map(|(buses, seed)| {
        (0..=buses).prop_map(move |generators| RandomCaseSpec {
            buses,
            generators,
            seed,
        })
    })
}

fn small_spec() -> impl Strategy<Value = RandomCaseSpec> {
    (2usize..30, any::<u64>()).prop_flat_map(|(buses, seed)| {
        (1..=buses.min(6)).prop_map(move |generators| RandomCaseSpec {
            buses,
            generators,
            seed,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn path_to_slack_is_the_set_of_branches_above(spec in spec()) {
        let case = random_case(&spec);
        let inst = Instance::new(case.clone()).unwrap();
        let topo = &inst.topo;
        let tree = Tree::new(&case);
        for i in 0..topo.n() {
            let path: BTreeSet<_> = topo.path_to_slack(i).into_iter().map(|j| topo.branch_id(j)).collect();
            let above: BTreeSet<_> = (0..topo.n()).filter(|&j| topo.is_downstream(j, i)).map(|j| topo.branch_id(j)).collect();
            let brute: BTreeSet<_> = tree.path(&case, topo.bus_id(i)).into_iter().collect();
            prop_assert_eq!(&path, &brute);
            prop_assert_eq!(&above, &brute);
        }
    }

    #[test]
    fn native_format_round_trips(spec in spec()) {
        let mut case = random_case(&spec);
        if let Some(b) = case.branches.first_mut() {
            b.f_max = Some(0.123456789012345);
        }
        let text = emit_native_case(&case);
        prop_assert_eq!(parse_native_case(&text).unwrap(), case);
    }

    #[test]
    fn coefficient_norms_count_downstream_buses(spec in spec()) {
        let inst = Instance::new(random_case(&spec)).unwrap();
        prop_assert!(norm_identity_failures(&inst).is_empty());
        for j in 0..inst.topo.n() {
            prop_assert_eq!(inst.ldf.coeffs.s[j].norm_squared(), inst.ldf.coeffs.t[j].norm_squared());
        }
    }

    #[test]
    fn sensitivities_factor_through_the_flow_matrix(spec in spec()) {
        let case = random_case(&spec);
        let inst = Instance::new(case.clone()).unwrap();
        let n = inst.topo.n();
        let branch = |j: usize| case.branches.iter().find(|b| b.id == inst.topo.branch_id(j)).unwrap();
        let f = &inst.ldf.f;
        let r = f.transpose() * DMatrix::from_diagonal(&DVector::from_fn(n, |j, _| 2.0 * branch(j).r)) * f;
        let x = f.transpose() * DMatrix::from_diagonal(&DVector::from_fn(n, |j, _| 2.0 * branch(j).x)) * f;
        prop_assert!((&inst.ldf.r - r).amax() <= 1e-12);
        prop_assert!((&inst.ldf.x - x).amax() <= 1e-12);
        let (er, ex) = min_eigenvalues(&inst);
        prop_assert!(er >= -1e-9 && ex >= -1e-9);
    }

    #[test]
    fn value_is_convex_in_demand(spec in small_spec(), a in 0.3f64..1.7, b in 0.3f64..1.7, alpha in 0.0f64..1.0) {
        let inst = Instance::new(random_case(&spec)).unwrap();
        let value = |k: f64| {
            let opf = inst.opf.with_ell(&inst.opf.ell * k).unwrap();
            let sol = ldfopf::assemble::solve_reduced(&opf).unwrap();
            (sol.status == Status::Optimal).then_some(sol.objective)
        };
        let (ja, jb, jm) = (value(a), value(b), value(alpha * a + (1.0 - alpha) * b));
        prop_assume!(ja.is_some() && jb.is_some());
        let jm = jm.expect("a convex feasible set contains the midpoint");
        prop_assert!(jm <= alpha * ja.unwrap() + (1.0 - alpha) * jb.unwrap() + 1e-7);
    }

    #[test]
    fn tighter_limits_never_lower_the_cost(spec in small_spec(), outer in 0.5f64..1.2, inner in 0.6f64..1.0, pick in any::<u64>()) {
        let inst = Instance::new(random_case(&spec)).unwrap();
        let free = inst.solve().unwrap();
        prop_assert!(free.is_optimal());
        let mut loose = inst.opf.clone();
        let mut tight = inst.opf.clone();
        for j in 0..inst.topo.n() {
            if (pick >> (j % 64)) & 1 == 0 {
                continue;
            }
            let (y, z) = inst.opf.flow(j, &free.p_g, &free.q_g);
            let f1 = outer * y.hypot(z) + 1e-3;
            let id = inst.topo.branch_id(j);
            loose = loose.with_limit(id, Some(f1)).unwrap();
            tight = tight.with_limit(id, Some(inner * f1)).unwrap();
        }
        let s1 = ldfopf::assemble::solve_reduced(&loose).unwrap();
        let s2 = ldfopf::assemble::solve_reduced(&tight).unwrap();
        prop_assume!(s1.is_optimal());
        if s2.is_optimal() {
            prop_assert!(s1.objective <= s2.objective + 1e-8);
            let r = MarginalReport::new(&tight, &s2).unwrap();
            prop_assert!(r.c_flow.iter().all(|&c| c <= 1e-9));
        }
    }
}

#[test]
fn one_generator_cases_match_grid_search() {
    let mut optimal = 0;
    for seed in 0..6 {
        let mut case = random_case(&RandomCaseSpec {
            buses: 6,
            generators: 1,
            seed,
        });
        let inst = Instance::new(case.clone()).unwrap();
        let free = inst.solve().unwrap();
        let j = inst.topo.index_of(case.generators[0].bus).unwrap();
        let (y, z) = inst.opf.flow(j, &free.p_g, &free.q_g);
        let id = inst.topo.branch_id(j);
        case.branches.iter_mut().find(|b| b.id == id).unwrap().f_max = Some(0.6 * y.hypot(z));
        let sol = Instance::new(case.clone()).unwrap().solve().unwrap();
        match common::grid_search(&case, 1e-3) {
            Some((oracle, _, _)) => {
                assert_eq!(sol.status, Status::Optimal, "seed {seed}");
                assert!(
                    (oracle - sol.objective).abs() <= 1e-4,
                    "seed {seed}: {oracle} vs {}",
                    sol.objective
                );
                optimal += 1;
            }
            None => assert_eq!(sol.status, Status::PrimalInfeasible, "seed {seed}"),
        }
    }
    assert!(optimal >= 3, "only {optimal} feasible draws");
}
