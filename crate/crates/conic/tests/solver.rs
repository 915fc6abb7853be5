use approx::assert_relative_eq;
use ldfopf_conic::{ConeBlock, ConicProgram, ConicSolver, InteriorPoint, Status};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn solve(prog: &ConicProgram) -> ldfopf_conic::SolveResult {
    InteriorPoint::default().solve(prog).unwrap()
}

#[test]
fn lower_bound_lp() {
    // min x  s.t. x ≥ 1   ⇔   −x + s = −1, s ≥ 0
    let prog = ConicProgram::new(
        DVector::from_vec(vec![1.0]),
        DMatrix::from_element(1, 1, -1.0),
        DVector::from_vec(vec![-1.0]),
        vec![ConeBlock::NonNeg(1)],
    )
    .unwrap();
    let res = solve(&prog);
    assert_eq!(res.status, Status::Optimal);
    assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-8);
    assert_relative_eq!(res.y[0], 1.0, epsilon = 1e-8);
    assert_relative_eq!(res.objective, 1.0, epsilon = 1e-8);
}

fn infeasible_soc(equality_as_zero_cone: bool) -> ConicProgram {
    // min 0  s.t. ‖(u, v)‖ ≤ 1,  u = 2
    let (mut rows, mut rhs, mut cones) = (Vec::new(), Vec::new(), Vec::new());
    if equality_as_zero_cone {
        rows.extend([1.0, 0.0]);
        rhs.push(2.0);
        cones.push(ConeBlock::Zero(1));
    } else {
        rows.extend([1.0, 0.0, -1.0, 0.0]);
        rhs.extend([2.0, -2.0]);
        cones.push(ConeBlock::NonNeg(2));
    }
    rows.extend([0.0, 0.0, -1.0, 0.0, 0.0, -1.0]);
    rhs.extend([1.0, 0.0, 0.0]);
    cones.push(ConeBlock::Soc(3));
    let m = rhs.len();
    ConicProgram::new(
        DVector::zeros(2),
        DMatrix::from_row_slice(m, 2, &rows),
        DVector::from_vec(rhs),
        cones,
    )
    .unwrap()
}

#[test]
fn detects_primal_infeasibility() {
    for zero_cone in [true, false] {
        let prog = infeasible_soc(zero_cone);
        let res = solve(&prog);
        assert_eq!(res.status, Status::PrimalInfeasible, "zero cone: {zero_cone}");
        let cert = res.certificate.expect("certificate");
        assert_relative_eq!(prog.b.dot(&cert), -1.0, epsilon = 1e-12);
        assert!(prog.a.tr_mul(&cert).amax() <= 1e-8);
        let (eig, _) = prog.cone_violation(&cert);
        assert!(eig >= 0.0);
    }
}

#[test]
fn detects_dual_infeasibility() {
    // min −x  s.t. x ≥ 0
    let prog = ConicProgram::new(
        DVector::from_vec(vec![-1.0]),
        DMatrix::from_element(1, 1, -1.0),
        DVector::zeros(1),
        vec![ConeBlock::NonNeg(1)],
    )
    .unwrap();
    let res = solve(&prog);
    assert_eq!(res.status, Status::DualInfeasible);
    let cert = res.certificate.unwrap();
    assert_relative_eq!(prog.c.dot(&cert), -1.0, epsilon = 1e-12);
}

#[test]
fn disc_maximization() {
    // min −u − v  s.t. ‖(u, v)‖ ≤ 1
    let prog = ConicProgram::new(
        DVector::from_vec(vec![-1.0, -1.0]),
        DMatrix::from_row_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 0.0, -1.0]),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        vec![ConeBlock::Soc(3)],
    )
    .unwrap();
    let res = solve(&prog);
    assert_eq!(res.status, Status::Optimal);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert_relative_eq!(res.x[0], h, epsilon = 1e-7);
    assert_relative_eq!(res.x[1], h, epsilon = 1e-7);
    assert_relative_eq!(res.objective, -std::f64::consts::SQRT_2, epsilon = 1e-8);
    // dual (μ, θ, φ) = (√2, −1, −1)
    assert_relative_eq!(res.y[0], std::f64::consts::SQRT_2, epsilon = 1e-7);
    assert_relative_eq!(res.y[1], -1.0, epsilon = 1e-7);
}

#[test]
fn equality_constrained_lp() {
    // min x + 2y  s.t. x + y = 1, x, y ≥ 0  →  (1, 0), dual on equality −1
    let prog = ConicProgram::new(
        DVector::from_vec(vec![1.0, 2.0]),
        DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)],
    )
    .unwrap();
    let res = solve(&prog);
    assert_eq!(res.status, Status::Optimal);
    assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-8);
    assert_relative_eq!(res.x[1], 0.0, epsilon = 1e-8);
    assert_relative_eq!(res.y[0], -1.0, epsilon = 1e-8);
}

#[test]
fn rejects_mismatched_dimensions() {
    let err = ConicProgram::new(
        DVector::zeros(2),
        DMatrix::zeros(3, 2),
        DVector::zeros(3),
        vec![ConeBlock::NonNeg(2)],
    )
    .unwrap_err();
    assert!(matches!(err, ldfopf_conic::ProgramError::Dimension(_)));
}

#[test]
fn iteration_log_has_one_line_per_iteration() {
    let prog = infeasible_soc(true);
    let mut buf = Vec::new();
    let res = InteriorPoint::default().solve_logged(&prog, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), res.iterations + 2);
}

/// Strictly feasible primal and dual by construction, so an optimum exists.
fn random_program(entries: &[f64], n: usize, n_lin: usize, n_soc: usize) -> ConicProgram {
    let mut k = 0;
    let mut next = || {
        let v = entries[k % entries.len()];
        k += 1;
        v
    };
    let m = n_lin + 3 * n_soc;
    let a = DMatrix::from_fn(m, n, |_, _| next());
    let x0 = DVector::from_fn(n, |_, _| next());
    let mut s0 = DVector::zeros(m);
    let mut y0 = DVector::zeros(m);
    for i in 0..n_lin {
        s0[i] = 0.5 + next().abs();
        y0[i] = 0.5 + next().abs();
    }
    for j in 0..n_soc {
        let r = n_lin + 3 * j;
        for v in [&mut s0, &mut y0] {
            let (u1, u2) = (next(), next());
            v[r] = (u1 * u1 + u2 * u2).sqrt() + 0.5;
            v[r + 1] = u1;
            v[r + 2] = u2;
        }
    }
    let b = &a * &x0 + &s0;
    let c = -a.tr_mul(&y0);
    let mut cones = vec![ConeBlock::NonNeg(n_lin)];
    cones.extend(std::iter::repeat_n(ConeBlock::Soc(3), n_soc));
    ConicProgram::new(c, a, b, cones).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_feasible_programs_reach_certified_optimum(
        entries in proptest::collection::vec(-1.0f64..1.0, 256),
        n in 1usize..8,
        n_lin in 1usize..12,
        n_soc in 0usize..5,
    ) {
        let prog = random_program(&entries, n, n_lin, n_soc);
        let res = solve(&prog);
        prop_assert_eq!(res.status, Status::Optimal);
        prop_assert!(res.residuals.primal <= 1e-8);
        prop_assert!(res.residuals.dual <= 1e-8);
        prop_assert!(res.residuals.gap <= 1e-8 * (1.0 + res.objective.abs()));
        let (eig_s, _) = prog.cone_violation(&res.s);
        let (eig_y, _) = prog.cone_violation(&res.y);
        prop_assert!(eig_s >= 0.0 && eig_y >= 0.0);
    }

    #[test]
    fn cost_scaling_scales_value_and_duals(
        entries in proptest::collection::vec(-1.0f64..1.0, 64),
        gamma in prop_oneof![Just(0.5f64), Just(2.0f64)],
    ) {
        let prog = random_program(&entries, 3, 6, 2);
        let mut scaled = prog.clone();
        scaled.c *= gamma;
        let base = solve(&prog);
        let res = solve(&scaled);
        prop_assert_eq!(res.status, Status::Optimal);
        prop_assert!((res.objective - gamma * base.objective).abs() <= 1e-7 * (1.0 + base.objective.abs()));
        prop_assert!((res.dual_objective - gamma * base.dual_objective).abs() <= 1e-7 * (1.0 + base.objective.abs()));
    }
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let prog = random_program(&[0.3, -1.2, 2.2, 0.9], 5, 8, 3);
    let a = solve(&prog);
    let b = solve(&prog);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
}

/// Duplicate columns make `A` rank deficient; the solver must still return
/// finite output with small residuals.
#[test]
fn rank_deficient_constraint_matrix_stays_finite() {
    let base = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.5, 2.0]);
    let a = DMatrix::from_fn(4, 3, |i, _| base[(i, 0)]);
    let prog = ConicProgram::new(
        DVector::from_vec(vec![1.0, 1.0, 1.0]),
        a,
        DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]),
        vec![ConeBlock::NonNeg(4)],
    )
    .unwrap();
    let res = solve(&prog);
    assert!(res.x.iter().chain(res.y.iter()).all(|v| v.is_finite()));
    assert!(
        res.residuals.primal <= 1e-6 && res.residuals.dual <= 1e-6,
        "{:?}",
        res.residuals
    );
    // with t = x1 + x2 + x3: min t s.t. -1 <= t <= 0.5, so t = -1
    assert!((res.objective + 1.0).abs() <= 1e-6, "{}", res.objective);
}
