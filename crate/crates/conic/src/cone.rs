//! Cone kernels: the zero cone, the nonnegative orthant and second-order
//! cones, together with the Nesterov–Todd scaling and Jordan-algebra
//! operations the interior-point iteration needs.
//!
//! A second-order cone block of size `k` holds `(t, u)` with `t ∈ ℝ`,
//! `u ∈ ℝ^{k-1}` and is feasible when `t ≥ ‖u‖₂`. The radius comes first.

use nalgebra::DMatrix;

/// One block of the product cone, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// `s = 0`; the dual multiplier is free.
    Zero(usize),
    /// `s ≥ 0` componentwise.
    NonNeg(usize),
    /// `s₀ ≥ ‖s₁..‖₂`. Size must be at least 2.
    Soc(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero(k) | ConeBlock::NonNeg(k) | ConeBlock::Soc(k) => k,
        }
    }

    /// Barrier degree contributed to the complementarity measure.
    pub fn degree(&self) -> usize {
        match *self {
            ConeBlock::Zero(_) => 0,
            ConeBlock::NonNeg(k) => k,
            ConeBlock::Soc(_) => 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ConeBlock::Zero(_))
    }
}

/// Smallest "eigenvalue" of `v` with respect to the cone. Nonnegative iff
/// `v` belongs to the (closed) cone. The zero cone reports `+∞` since it
/// takes no part in interiority.
pub fn min_eig(block: ConeBlock, v: &[f64]) -> f64 {
    match block {
        ConeBlock::Zero(_) => f64::INFINITY,
        ConeBlock::NonNeg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
        ConeBlock::Soc(_) => v[0] - norm(&v[1..]),
    }
}

/// Adds `alpha · e` where `e` is the cone identity.
pub fn add_identity(block: ConeBlock, v: &mut [f64], alpha: f64) {
    match block {
        ConeBlock::Zero(_) => {}
        ConeBlock::NonNeg(_) => v.iter_mut().for_each(|x| *x += alpha),
        ConeBlock::Soc(_) => v[0] += alpha,
    }
}

/// `u ∘ v` (Jordan product), written into `out`.
pub fn jordan_product(block: ConeBlock, u: &[f64], v: &[f64], out: &mut [f64]) {
    match block {
        ConeBlock::Zero(_) => out.iter_mut().for_each(|x| *x = 0.0),
        ConeBlock::NonNeg(_) => {
            for i in 0..out.len() {
                out[i] = u[i] * v[i];
            }
        }
        ConeBlock::Soc(_) => {
            out[0] = dot(u, v);
            for i in 1..out.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
    }
}

/// Solves `lambda ∘ x = d` for `x`.
pub fn jordan_solve(block: ConeBlock, lambda: &[f64], d: &[f64], out: &mut [f64]) {
    match block {
        ConeBlock::Zero(_) => out.iter_mut().for_each(|x| *x = 0.0),
        ConeBlock::NonNeg(_) => {
            for i in 0..out.len() {
                out[i] = d[i] / lambda[i];
            }
        }
        ConeBlock::Soc(_) => {
            let l0 = lambda[0];
            let det = l0 * l0 - dot(&lambda[1..], &lambda[1..]);
            let x0 = (l0 * d[0] - dot(&lambda[1..], &d[1..])) / det;
            out[0] = x0;
            for i in 1..out.len() {
                out[i] = (d[i] - x0 * lambda[i]) / l0;
            }
        }
    }
}

/// Nesterov–Todd scaling of one block. `W` is symmetric positive definite
/// with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub enum NtScaling {
    Zero,
    /// Diagonal `W = diag(w)`, `w = sqrt(s / z)`.
    NonNeg {
        w: Vec<f64>,
    },
    /// `W = η [w₀, w₁ᵀ; w₁, I + w₁w₁ᵀ/(1 + w₀)]` with `w̄ᵀ J w̄ = 1`.
    Soc {
        eta: f64,
        wbar: Vec<f64>,
    },
}

impl NtScaling {
    /// Computes the scaling point from interior `s`, `z`. Returns the scaling
    /// together with `λ = W z`.
    pub fn compute(block: ConeBlock, s: &[f64], z: &[f64]) -> (NtScaling, Vec<f64>) {
        match block {
            ConeBlock::Zero(k) => (NtScaling::Zero, vec![0.0; k]),
            ConeBlock::NonNeg(_) => {
                let w: Vec<f64> = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                (NtScaling::NonNeg { w }, lambda)
            }
            ConeBlock::Soc(k) => {
                let s_det = j_det(s).max(f64::MIN_POSITIVE);
                let z_det = j_det(z).max(f64::MIN_POSITIVE);
                let s_scale = s_det.sqrt();
                let z_scale = z_det.sqrt();
                let sbar: Vec<f64> = s.iter().map(|x| x / s_scale).collect();
                let zbar: Vec<f64> = z.iter().map(|x| x / z_scale).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut wbar = vec![0.0; k];
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..k {
                    wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                let eta = (s_det / z_det).powf(0.25);
                let scaling = NtScaling::Soc { eta, wbar };
                let mut lambda = vec![0.0; k];
                scaling.apply(z, &mut lambda);
                (scaling, lambda)
            }
        }
    }

    /// `out = W v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            NtScaling::NonNeg { w } => {
                for i in 0..out.len() {
                    out[i] = w[i] * v[i];
                }
            }
            NtScaling::Soc { eta, wbar } => soc_apply(*eta, wbar, v, out, false),
        }
    }

    /// `out = W⁻¹ v`.
    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            NtScaling::NonNeg { w } => {
                for i in 0..out.len() {
                    out[i] = v[i] / w[i];
                }
            }
            NtScaling::Soc { eta, wbar } => soc_apply(*eta, wbar, v, out, true),
        }
    }

    /// Dense `W²` for the block.
    pub fn w_squared(&self, k: usize) -> DMatrix<f64> {
        self.dense_power(k, false)
    }

    /// Dense `W⁻²` for the block.
    pub fn w_inv_squared(&self, k: usize) -> DMatrix<f64> {
        self.dense_power(k, true)
    }

    fn dense_power(&self, k: usize, inverse: bool) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(k, k);
        let mut col = vec![0.0; k];
        let mut e = vec![0.0; k];
        for j in 0..k {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            if inverse {
                self.apply_inv(&e, &mut col);
            } else {
                self.apply(&e, &mut col);
            }
            for i in 0..k {
                w[(i, j)] = col[i];
            }
        }
        &w * &w
    }
}

fn soc_apply(eta: f64, wbar: &[f64], v: &[f64], out: &mut [f64], inverse: bool) {
    // The inverse flips the sign of w₁ and uses 1/η.
    let (scale, sign) = if inverse { (1.0 / eta, -1.0) } else { (eta, 1.0) };
    let w0 = wbar[0];
    let w1 = &wbar[1..];
    let w1v = dot(w1, &v[1..]);
    out[0] = scale * (w0 * v[0] + sign * w1v);
    let coef = sign * v[0] + w1v / (1.0 + w0);
    for i in 1..out.len() {
        out[i] = scale * (v[i] + coef * wbar[i]);
    }
}

/// Largest `α ≥ 0` (capped at `f64::INFINITY`) with `v + α dv` in the cone.
pub fn step_to_boundary(block: ConeBlock, v: &[f64], dv: &[f64]) -> f64 {
    match block {
        ConeBlock::Zero(_) => f64::INFINITY,
        ConeBlock::NonNeg(_) => {
            let mut alpha = f64::INFINITY;
            for (x, d) in v.iter().zip(dv) {
                if *d < 0.0 {
                    alpha = alpha.min(-x / d);
                }
            }
            alpha
        }
        ConeBlock::Soc(_) => soc_step(v, dv),
    }
}

fn soc_step(v: &[f64], dv: &[f64]) -> f64 {
    // (v0 + α d0)² − ‖v1 + α d1‖² ≥ 0 and v0 + α d0 ≥ 0.
    let a = j_det(dv);
    let b = 2.0 * (v[0] * dv[0] - dot(&v[1..], &dv[1..]));
    let c = j_det(v).max(0.0);
    let mut alpha = f64::INFINITY;
    if dv[0] < 0.0 {
        alpha = -v[0] / dv[0];
    }
    let roots = quadratic_roots(a, b, c);
    for r in roots.into_iter().flatten() {
        if r > 0.0 {
            alpha = alpha.min(r);
        }
    }
    alpha
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    if a == 0.0 {
        if b == 0.0 {
            return [None, None];
        }
        return [Some(-c / b), None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return [Some(0.0), None];
    }
    [Some(q / a), Some(c / q)]
}

/// `v₀² − ‖v₁..‖²`.
pub fn j_det(v: &[f64]) -> f64 {
    v[0] * v[0] - dot(&v[1..], &v[1..])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
