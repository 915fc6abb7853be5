//! Dense solver for the interior-point Newton system
//!
//! ```text
//! [ 0   Aᵀ ] [dx]   [r1]
//! [ A  −H  ] [dz] = [r2]
//! ```
//!
//! with `H = W²` on cone rows and `H = 0` on zero-cone rows. Cone rows are
//! pivoted first (their block of `H` is block diagonal and positive
//! definite), which leaves the quasi-definite Schur complement
//!
//! ```text
//! [ AₑᵀW⁻²Aₑ + δI   A₀ᵀ ]
//! [ A₀             −δI  ]
//! ```
//!
//! factored by an unpivoted LDLᵀ with static and dynamic regularization.
//! Iterative refinement runs against the unregularized system.

use nalgebra::{DMatrix, DVector};

use crate::cone::{ConeBlock, NtScaling};
use crate::program::ConicProgram;

pub(crate) struct KktFactor<'a> {
    prog: &'a ConicProgram,
    scalings: &'a [NtScaling],
    offsets: Vec<usize>,
    /// Zero-cone row indices, in order.
    zero_rows: Vec<usize>,
    ldl: Ldl,
    refine_steps: usize,
}

impl<'a> KktFactor<'a> {
    pub(crate) fn new(prog: &'a ConicProgram, scalings: &'a [NtScaling], static_reg: f64, refine_steps: usize) -> Self {
        let n = prog.num_vars();
        let offsets = prog.block_offsets();
        let mut zero_rows = Vec::new();
        let mut scaled_rows = 0;
        for (block, &start) in prog.cones.iter().zip(&offsets) {
            if block.is_zero() {
                zero_rows.extend(start..start + block.dim());
            } else {
                scaled_rows += block.dim();
            }
        }

        // W⁻¹ Aₑ, stacked over the cone blocks.
        let mut scaled = DMatrix::zeros(scaled_rows, n);
        let mut at = 0;
        let mut col_in = Vec::new();
        let mut col_out = Vec::new();
        for ((block, &start), scaling) in prog.cones.iter().zip(&offsets).zip(scalings) {
            if block.is_zero() {
                continue;
            }
            let k = block.dim();
            col_in.resize(k, 0.0);
            col_out.resize(k, 0.0);
            for j in 0..n {
                for (i, v) in col_in.iter_mut().enumerate() {
                    *v = prog.a[(start + i, j)];
                }
                scaling.apply_inv(&col_in, &mut col_out);
                for (i, v) in col_out.iter().enumerate() {
                    scaled[(at + i, j)] = *v;
                }
            }
            at += k;
        }

        let nz = zero_rows.len();
        let dim = n + nz;
        let mut kkt = DMatrix::zeros(dim, dim);
        let gram = scaled.tr_mul(&scaled);
        kkt.view_mut((0, 0), (n, n)).copy_from(&gram);
        for i in 0..n {
            kkt[(i, i)] += static_reg;
        }
        for (r, &row) in zero_rows.iter().enumerate() {
            for j in 0..n {
                let v = prog.a[(row, j)];
                kkt[(n + r, j)] = v;
                kkt[(j, n + r)] = v;
            }
            kkt[(n + r, n + r)] = -static_reg;
        }
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let ldl = Ldl::factor(kkt, &signs);

        KktFactor {
            prog,
            scalings,
            offsets,
            zero_rows,
            ldl,
            refine_steps,
        }
    }

    /// Solves the unregularized system with iterative refinement.
    pub(crate) fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dz) = self.solve_regularized(r1, r2);
        let scale = 1.0 + r1.amax().max(r2.amax());
        let mut best = self.residual_norm(r1, r2, &dx, &dz);
        for _ in 0..self.refine_steps {
            if best <= 1e-15 * scale {
                break;
            }
            let (e1, e2) = self.residual(r1, r2, &dx, &dz);
            let (cx, cz) = self.solve_regularized(&e1, &e2);
            let nx = &dx + &cx;
            let nzv = &dz + &cz;
            let res = self.residual_norm(r1, r2, &nx, &nzv);
            if res < best {
                dx = nx;
                dz = nzv;
                best = res;
            } else {
                break;
            }
        }
        (dx, dz)
    }

    fn solve_regularized(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let prog = self.prog;
        let n = prog.num_vars();
        let m = prog.num_rows();
        let mut rhs = DVector::zeros(n + self.zero_rows.len());
        rhs.rows_mut(0, n).copy_from(r1);
        // r1 + Aₑᵀ W⁻² r2ₑ
        let hinv_r2 = self.apply_hinv(r2);
        let tmp = prog.a.tr_mul(&hinv_r2);
        for j in 0..n {
            rhs[j] += tmp[j];
        }
        for (r, &row) in self.zero_rows.iter().enumerate() {
            rhs[n + r] = r2[row];
        }
        let sol = self.ldl.solve(&rhs);
        let dx = sol.rows(0, n).into_owned();
        let mut dz = DVector::zeros(m);
        let adx = &prog.a * &dx;
        let diff = &adx - r2;
        let cone_part = self.apply_hinv(&diff);
        dz.copy_from(&cone_part);
        for (r, &row) in self.zero_rows.iter().enumerate() {
            dz[row] = sol[n + r];
        }
        (dx, dz)
    }

    /// `W⁻² v` on cone rows, zero on zero-cone rows.
    fn apply_hinv(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        let mut tmp = Vec::new();
        for ((block, &start), scaling) in self.prog.cones.iter().zip(&self.offsets).zip(self.scalings) {
            if block.is_zero() {
                continue;
            }
            let k = block.dim();
            tmp.resize(k, 0.0);
            let src = &v.as_slice()[start..start + k];
            scaling.apply_inv(src, &mut tmp);
            let dst = &mut out.as_mut_slice()[start..start + k];
            scaling.apply_inv(&tmp, dst);
        }
        out
    }

    /// `W² v` on cone rows, zero on zero-cone rows.
    fn apply_h(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        let mut tmp = Vec::new();
        for ((block, &start), scaling) in self.prog.cones.iter().zip(&self.offsets).zip(self.scalings) {
            if block.is_zero() {
                continue;
            }
            let k = block.dim();
            tmp.resize(k, 0.0);
            let src = &v.as_slice()[start..start + k];
            scaling.apply(src, &mut tmp);
            let dst = &mut out.as_mut_slice()[start..start + k];
            scaling.apply(&tmp, dst);
        }
        out
    }

    fn residual(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        dx: &DVector<f64>,
        dz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let e1 = r1 - self.prog.a.tr_mul(dz);
        let e2 = r2 - (&self.prog.a * dx - self.apply_h(dz));
        (e1, e2)
    }

    fn residual_norm(&self, r1: &DVector<f64>, r2: &DVector<f64>, dx: &DVector<f64>, dz: &DVector<f64>) -> f64 {
        let (e1, e2) = self.residual(r1, r2, dx, dz);
        e1.amax().max(e2.amax())
    }
}

/// Unpivoted LDLᵀ of a quasi-definite matrix with prescribed pivot signs.
struct Ldl {
    l: DMatrix<f64>,
    d: Vec<f64>,
}

impl Ldl {
    const DYNAMIC_EPS: f64 = 1e-13;
    const DYNAMIC_DELTA: f64 = 1e-7;

    fn factor(mut a: DMatrix<f64>, signs: &[f64]) -> Ldl {
        let dim = a.nrows();
        let mut d = vec![0.0; dim];
        let mut work = vec![0.0; dim];
        for j in 0..dim {
            for k in 0..j {
                work[k] = a[(j, k)] * d[k];
            }
            let mut dj = a[(j, j)];
            for k in 0..j {
                dj -= a[(j, k)] * work[k];
            }
            if dj * signs[j] <= Self::DYNAMIC_EPS {
                dj = signs[j] * Self::DYNAMIC_DELTA;
            }
            d[j] = dj;
            a[(j, j)] = 1.0;
            for i in j + 1..dim {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= a[(i, k)] * work[k];
                }
                a[(i, j)] = v / dj;
            }
        }
        Ldl { l: a, d }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let dim = self.d.len();
        let mut x = b.clone();
        for i in 0..dim {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[(i, k)] * x[k];
            }
            x[i] = v;
        }
        for i in 0..dim {
            x[i] /= self.d[i];
        }
        for i in (0..dim).rev() {
            let mut v = x[i];
            for k in i + 1..dim {
                v -= self.l[(k, i)] * x[k];
            }
            x[i] = v;
        }
        x
    }
}

pub(crate) fn identity_scalings(cones: &[ConeBlock]) -> Vec<NtScaling> {
    cones
        .iter()
        .map(|block| match *block {
            ConeBlock::Zero(_) => NtScaling::Zero,
            ConeBlock::NonNeg(k) => NtScaling::NonNeg { w: vec![1.0; k] },
            ConeBlock::Soc(k) => {
                let mut wbar = vec![0.0; k];
                wbar[0] = 1.0;
                NtScaling::Soc { eta: 1.0, wbar }
            }
        })
        .collect()
}
