//! Homogeneous self-dual embedding with Mehrotra predictor-corrector steps.
//!
//! The embedding solved is
//!
//! ```text
//! Aᵀz + cτ       = 0
//! Ax + s − bτ    = 0
//! cᵀx + bᵀz + κ  = 0,   (s, z) ∈ K × K*,  τ, κ ≥ 0
//! ```
//!
//! An optimal pair is `(x, s, z) / τ`; `τ → 0` with `κ > 0` yields an
//! infeasibility certificate.

use std::io::Write;

use nalgebra::DVector;

use crate::cone::{self, ConeBlock, NtScaling};
use crate::kkt::{identity_scalings, KktFactor};
use crate::program::{ConicProgram, ConicSolver, Residuals, SolveResult, SolverOptions, Status};
use crate::ProgramError;

/// Primal-dual interior-point solver. Single threaded and deterministic.
#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub options: SolverOptions,
}

impl InteriorPoint {
    pub fn new(options: SolverOptions) -> Self {
        InteriorPoint { options }
    }

    /// Solves `prog`, writing one line per iteration to `log`.
    pub fn solve_logged(&self, prog: &ConicProgram, log: &mut dyn Write) -> Result<SolveResult, ProgramError> {
        prog.validate()?;
        Ok(Engine::new(prog, self.options).run(Some(log)))
    }
}

impl ConicSolver for InteriorPoint {
    fn solve(&self, prog: &ConicProgram) -> Result<SolveResult, ProgramError> {
        prog.validate()?;
        Ok(Engine::new(prog, self.options).run(None))
    }
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

impl Iterate {
    fn is_finite(&self) -> bool {
        self.tau.is_finite()
            && self.kappa.is_finite()
            && [&self.x, &self.s, &self.z]
                .iter()
                .all(|v| v.iter().all(|e| e.is_finite()))
    }
}

struct Direction {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Engine<'a> {
    prog: &'a ConicProgram,
    opts: SolverOptions,
    offsets: Vec<usize>,
    degree: usize,
    b_norm: f64,
    c_norm: f64,
}

struct Assessment {
    residuals: Residuals,
    objective: f64,
    dual_objective: f64,
    status: Option<Status>,
    certificate: Option<DVector<f64>>,
    merit: f64,
}

impl<'a> Engine<'a> {
    fn new(prog: &'a ConicProgram, opts: SolverOptions) -> Self {
        let degree = prog.cones.iter().map(ConeBlock::degree).sum();
        Engine {
            prog,
            opts,
            offsets: prog.block_offsets(),
            degree,
            b_norm: prog.b.amax(),
            c_norm: prog.c.amax(),
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (ConeBlock, usize)> + '_ {
        self.prog.cones.iter().copied().zip(self.offsets.iter().copied())
    }

    fn run(&self, mut log: Option<&mut dyn Write>) -> SolveResult {
        let mut it = self.initial_point();
        let mut best: Option<(f64, Iterate)> = None;
        let mut stalled = 0;
        let mut last_step: Option<f64> = None;

        if let Some(w) = log.as_deref_mut() {
            let _ = writeln!(
                w,
                "iter      pcost          dcost          gap        pres       dres       step"
            );
        }

        for iter in 0..=self.opts.max_iter {
            let assessment = self.assess(&it);
            if let Some(w) = log.as_deref_mut() {
                let step = last_step.map_or_else(|| "-".to_string(), |a| format!("{a:.3e}"));
                let _ = writeln!(
                    w,
                    "{:4} {:+.6e} {:+.6e} {:.3e} {:.3e} {:.3e} {}",
                    iter,
                    assessment.objective,
                    assessment.dual_objective,
                    assessment.residuals.gap,
                    assessment.residuals.primal,
                    assessment.residuals.dual,
                    step
                );
            }
            if let Some(status) = assessment.status {
                return self.finish(&it, status, assessment, iter);
            }
            if best.as_ref().is_none_or(|(m, _)| assessment.merit < *m) {
                best = Some((assessment.merit, it.clone()));
            }
            if iter == self.opts.max_iter || stalled >= 3 {
                let (_, best_it) = best.expect("at least one iterate assessed");
                let status = if stalled >= 3 {
                    Status::NumericalError
                } else {
                    Status::MaxIterations
                };
                let assessment = self.assess(&best_it);
                return self.finish(&best_it, status, assessment, iter);
            }

            let previous = it.clone();
            let alpha = self.step(&mut it);
            last_step = Some(alpha);
            if !alpha.is_finite() || !it.is_finite() {
                // Nothing useful can follow a non-finite iterate.
                it = previous;
                stalled = 3;
            } else if alpha < 1e-10 {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        unreachable!("loop returns on the final iteration")
    }

    fn finish(&self, it: &Iterate, status: Status, a: Assessment, iterations: usize) -> SolveResult {
        let inv_tau = 1.0 / it.tau;
        let (x, s, y) = match status {
            Status::PrimalInfeasible | Status::DualInfeasible => (it.x.clone(), it.s.clone(), it.z.clone()),
            _ => (&it.x * inv_tau, &it.s * inv_tau, &it.z * inv_tau),
        };
        SolveResult {
            status,
            x,
            s,
            y,
            objective: a.objective,
            dual_objective: a.dual_objective,
            residuals: a.residuals,
            iterations,
            certificate: a.certificate,
        }
    }

    fn assess(&self, it: &Iterate) -> Assessment {
        let prog = self.prog;
        let o = &self.opts;
        let x = &it.x / it.tau;
        let s = &it.s / it.tau;
        let z = &it.z / it.tau;
        let pres = (&prog.a * &x + &s - &prog.b).amax() / (1.0 + self.b_norm);
        let dres = (prog.a.tr_mul(&z) + &prog.c).amax() / (1.0 + self.c_norm);
        let pcost = prog.c.dot(&x) + prog.offset;
        let dcost = -prog.b.dot(&z) + prog.offset;
        let gap = (pcost - dcost).abs();
        let residuals = Residuals {
            primal: pres,
            dual: dres,
            gap,
        };
        let gap_rel = gap / (1.0 + pcost.abs());
        let merit = pres.max(dres).max(gap_rel);

        let mut status = None;
        let mut certificate = None;
        if pres <= o.tol_feas && dres <= o.tol_feas && gap <= o.tol_gap * (1.0 + pcost.abs()) {
            status = Some(Status::Optimal);
        } else if it.tau < it.kappa {
            let bz = prog.b.dot(&it.z);
            let cx = prog.c.dot(&it.x);
            if bz < 0.0 {
                let cert = &it.z / (-bz);
                if prog.a.tr_mul(&cert).amax() <= o.tol_infeas {
                    status = Some(Status::PrimalInfeasible);
                    certificate = Some(cert);
                }
            }
            if status.is_none() && cx < 0.0 {
                let cert = &it.x / (-cx);
                let ax_s = &prog.a * &cert + &it.s / (-cx);
                if ax_s.amax() <= o.tol_infeas {
                    status = Some(Status::DualInfeasible);
                    certificate = Some(cert);
                }
            }
        }
        Assessment {
            residuals,
            objective: pcost,
            dual_objective: dcost,
            status,
            certificate,
            merit,
        }
    }

    fn initial_point(&self) -> Iterate {
        let prog = self.prog;
        let n = prog.num_vars();
        let m = prog.num_rows();
        let scalings = identity_scalings(&prog.cones);
        let kkt = KktFactor::new(prog, &scalings, self.opts.static_reg, self.opts.refine_steps);

        // min ‖s‖ s.t. Ax + s = b
        let (x, w) = kkt.solve(&DVector::zeros(n), &prog.b);
        let mut s = -w;
        // min ‖z‖ s.t. Aᵀz + c = 0
        let (_, mut z) = kkt.solve(&(-&prog.c), &DVector::zeros(m));

        for (block, start) in self.blocks() {
            if block.is_zero() {
                for i in start..start + block.dim() {
                    s[i] = 0.0;
                }
            }
        }
        self.shift_into_cone(&mut s);
        self.shift_into_cone(&mut z);
        Iterate {
            x,
            s,
            z,
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn shift_into_cone(&self, v: &mut DVector<f64>) {
        let mut worst = f64::INFINITY;
        for (block, start) in self.blocks() {
            worst = worst.min(cone::min_eig(block, &v.as_slice()[start..start + block.dim()]));
        }
        if !worst.is_finite() {
            return;
        }
        let shift = if worst < 1e-8 { 1.0 - worst } else { 0.0 };
        if shift > 0.0 {
            for (block, start) in self.blocks() {
                cone::add_identity(block, &mut v.as_mut_slice()[start..start + block.dim()], shift);
            }
        }
    }

    fn mu(&self, it: &Iterate) -> f64 {
        let sz: f64 = self
            .blocks()
            .filter(|(b, _)| !b.is_zero())
            .map(|(b, st)| cone::dot(&it.s.as_slice()[st..st + b.dim()], &it.z.as_slice()[st..st + b.dim()]))
            .sum();
        (sz + it.tau * it.kappa) / (self.degree as f64 + 1.0)
    }

    /// One predictor-corrector step. Returns the step length taken.
    fn step(&self, it: &mut Iterate) -> f64 {
        let prog = self.prog;
        let m = prog.num_rows();

        let rx = prog.a.tr_mul(&it.z) + &prog.c * it.tau;
        let rz = &prog.a * &it.x + &it.s - &prog.b * it.tau;
        let rtau = prog.c.dot(&it.x) + prog.b.dot(&it.z) + it.kappa;
        let mu = self.mu(it);

        let mut scalings = Vec::with_capacity(prog.cones.len());
        let mut lambda = DVector::zeros(m);
        for (block, st) in self.blocks() {
            let k = block.dim();
            let (w, l) = NtScaling::compute(block, &it.s.as_slice()[st..st + k], &it.z.as_slice()[st..st + k]);
            lambda.as_mut_slice()[st..st + k].copy_from_slice(&l);
            scalings.push(w);
        }
        let kkt = KktFactor::new(prog, &scalings, self.opts.static_reg, self.opts.refine_steps);
        let (x1, z1) = kkt.solve(&(-&prog.c), &prog.b);

        // affine scaling direction
        let lambda_sq = self.jordan(&lambda, &lambda);
        let ds_aff = -&lambda_sq;
        let dtau_aff = -it.tau * it.kappa;
        let aff = self.direction(
            it,
            &scalings,
            &lambda,
            &kkt,
            &x1,
            &z1,
            (&rx, &rz, rtau),
            1.0,
            &ds_aff,
            dtau_aff,
        );
        let alpha_aff = self.max_step(it, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // combined direction with Mehrotra correction
        let ws = self.scaled(&scalings, &aff.s, true);
        let wz = self.scaled(&scalings, &aff.z, false);
        let corr = self.jordan(&ws, &wz);
        let mut ds = -&lambda_sq - &corr;
        for (block, st) in self.blocks() {
            cone::add_identity(block, &mut ds.as_mut_slice()[st..st + block.dim()], sigma * mu);
        }
        let dtau = -it.tau * it.kappa - aff.tau * aff.kappa + sigma * mu;
        let dir = self.direction(
            it,
            &scalings,
            &lambda,
            &kkt,
            &x1,
            &z1,
            (&rx, &rz, rtau),
            1.0 - sigma,
            &ds,
            dtau,
        );

        let alpha = (self.opts.step_fraction * self.max_step(it, &dir)).min(1.0);
        it.x += &dir.x * alpha;
        it.s += &dir.s * alpha;
        it.z += &dir.z * alpha;
        it.tau += alpha * dir.tau;
        it.kappa += alpha * dir.kappa;
        alpha
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        scalings: &[NtScaling],
        lambda: &DVector<f64>,
        kkt: &KktFactor<'_>,
        x1: &DVector<f64>,
        z1: &DVector<f64>,
        (rx, rz, rtau): (&DVector<f64>, &DVector<f64>, f64),
        eta: f64,
        ds_target: &DVector<f64>,
        dtau_target: f64,
    ) -> Direction {
        let prog = self.prog;
        let m = prog.num_rows();
        // W (λ \ d_s) on cone rows
        let mut w_lds = DVector::zeros(m);
        let mut tmp = Vec::new();
        for ((block, st), scaling) in self.blocks().zip(scalings) {
            if block.is_zero() {
                continue;
            }
            let k = block.dim();
            tmp.resize(k, 0.0);
            cone::jordan_solve(
                block,
                &lambda.as_slice()[st..st + k],
                &ds_target.as_slice()[st..st + k],
                &mut tmp,
            );
            scaling.apply(&tmp, &mut w_lds.as_mut_slice()[st..st + k]);
        }
        let r1 = -rx * eta;
        let r2 = -rz * eta - &w_lds;
        let (x2, z2) = kkt.solve(&r1, &r2);

        let denom = prog.c.dot(x1) + prog.b.dot(z1) - it.kappa / it.tau;
        let dtau = (-eta * rtau - dtau_target / it.tau - prog.c.dot(&x2) - prog.b.dot(&z2)) / denom;
        let dx = &x2 + x1 * dtau;
        let dz = &z2 + z1 * dtau;

        // ds = W(λ \ d_s) − W² dz on cone rows; zero on zero-cone rows
        let mut ds = DVector::zeros(m);
        let mut a = Vec::new();
        for ((block, st), scaling) in self.blocks().zip(scalings) {
            if block.is_zero() {
                continue;
            }
            let k = block.dim();
            tmp.resize(k, 0.0);
            a.resize(k, 0.0);
            scaling.apply(&dz.as_slice()[st..st + k], &mut tmp);
            scaling.apply(&tmp, &mut a);
            for i in 0..k {
                ds[st + i] = w_lds[st + i] - a[i];
            }
        }
        let dkappa = (dtau_target - it.kappa * dtau) / it.tau;
        Direction {
            x: dx,
            s: ds,
            z: dz,
            tau: dtau,
            kappa: dkappa,
        }
    }

    fn max_step(&self, it: &Iterate, d: &Direction) -> f64 {
        let mut alpha = f64::INFINITY;
        for (block, st) in self.blocks() {
            let k = block.dim();
            alpha = alpha.min(cone::step_to_boundary(
                block,
                &it.s.as_slice()[st..st + k],
                &d.s.as_slice()[st..st + k],
            ));
            alpha = alpha.min(cone::step_to_boundary(
                block,
                &it.z.as_slice()[st..st + k],
                &d.z.as_slice()[st..st + k],
            ));
        }
        if d.tau < 0.0 {
            alpha = alpha.min(-it.tau / d.tau);
        }
        if d.kappa < 0.0 {
            alpha = alpha.min(-it.kappa / d.kappa);
        }
        alpha
    }

    fn jordan(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (block, st) in self.blocks() {
            let k = block.dim();
            cone::jordan_product(
                block,
                &u.as_slice()[st..st + k],
                &v.as_slice()[st..st + k],
                &mut out.as_mut_slice()[st..st + k],
            );
        }
        out
    }

    /// `W⁻¹ v` when `inverse`, else `W v`, blockwise.
    fn scaled(&self, scalings: &[NtScaling], v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for ((block, st), scaling) in self.blocks().zip(scalings) {
            let k = block.dim();
            let src = &v.as_slice()[st..st + k];
            let dst = &mut out.as_mut_slice()[st..st + k];
            if inverse {
                scaling.apply_inv(src, dst);
            } else {
                scaling.apply(src, dst);
            }
        }
        out
    }
}
