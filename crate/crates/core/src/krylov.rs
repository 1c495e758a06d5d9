//! Preconditioned conjugate gradients, Lanczos spectral estimates and dense oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bpx::Preconditioner;
use crate::error::{Error, Result};
use crate::sparse::{dot, Csr, EnvelopeCholesky};

impl Preconditioner for EnvelopeCholesky {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.solve(r)
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Step lengths and direction updates, enough to rebuild the Lanczos matrix.
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `sqrt(r_k . z_k) / sqrt(r_0 . z_0)` per iteration.
    pub history: Vec<f64>,
}

impl PcgResult {
    pub fn lanczos(&self) -> Tridiagonal {
        Tridiagonal::from_cg(&self.alphas, &self.betas)
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Clone, Debug, Default)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    /// Lanczos matrix of the preconditioned operator from CG coefficients.
    pub fn from_cg(alphas: &[f64], betas: &[f64]) -> Self {
        let k = alphas.len();
        let mut t = Self {
            diag: Vec::with_capacity(k),
            off: Vec::with_capacity(k.saturating_sub(1)),
        };
        for j in 0..k {
            let mut d = 1.0 / alphas[j];
            if j > 0 {
                d += betas[j - 1] / alphas[j - 1];
            }
            t.diag.push(d);
            if j + 1 < k {
                t.off.push(betas[j].sqrt() / alphas[j]);
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues below `x` (Sturm sequence).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let b2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `k`-th smallest eigenvalue by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn extremes(&self) -> (f64, f64) {
        (self.eigenvalue(0), self.eigenvalue(self.len() - 1))
    }
}

/// Preconditioned CG from a zero initial guess.
pub fn pcg(a: &Csr, b: &[f64], pre: &dyn Preconditioner, tol: f64, maxit: usize) -> PcgResult {
    let mut state = Pcg::new(a, b, pre);
    while !state.converged(tol) && state.iterations() < maxit {
        if !state.step() {
            break;
        }
    }
    state.finish(tol)
}

/// Iterative PCG state, stepped externally to monitor the Lanczos matrix.
struct Pcg<'a> {
    a: &'a Csr,
    pre: &'a dyn Preconditioner,
    x: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    rz: f64,
    rz0: f64,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    history: Vec<f64>,
}

impl<'a> Pcg<'a> {
    fn new(a: &'a Csr, b: &[f64], pre: &'a dyn Preconditioner) -> Self {
        let r = b.to_vec();
        let z = pre.apply(&r);
        let rz = dot(&r, &z);
        Self {
            a,
            pre,
            x: vec![0.0; b.len()],
            r,
            p: z,
            rz,
            rz0: rz,
            alphas: Vec::new(),
            betas: Vec::new(),
            history: vec![1.0],
        }
    }

    fn iterations(&self) -> usize {
        self.alphas.len()
    }

    fn ratio(&self) -> f64 {
        if self.rz0 <= 0.0 {
            0.0
        } else {
            (self.rz.max(0.0) / self.rz0).sqrt()
        }
    }

    fn converged(&self, tol: f64) -> bool {
        self.ratio() < tol
    }

    /// One iteration; false on breakdown.
    fn step(&mut self) -> bool {
        if self.rz <= 0.0 {
            return false;
        }
        let ap = self.a.matvec(&self.p);
        let pap = dot(&self.p, &ap);
        if pap <= 0.0 {
            return false;
        }
        let alpha = self.rz / pap;
        for i in 0..self.x.len() {
            self.x[i] += alpha * self.p[i];
            self.r[i] -= alpha * ap[i];
        }
        let z = self.pre.apply(&self.r);
        let rz_new = dot(&self.r, &z);
        let beta = rz_new / self.rz;
        for (pi, zi) in self.p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        self.rz = rz_new;
        self.alphas.push(alpha);
        self.betas.push(beta);
        self.history.push(self.ratio());
        true
    }

    fn finish(self, tol: f64) -> PcgResult {
        let converged = self.converged(tol);
        PcgResult {
            iterations: self.alphas.len(),
            x: self.x,
            converged,
            alphas: self.alphas,
            betas: self.betas,
            history: self.history,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SpectralEstimate {
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub seed: u64,
    /// Relative change of both extreme Ritz values that counts as settled.
    pub rel_tol: f64,
    /// Number of consecutive settled iterations required to stop.
    pub patience: usize,
    pub max_iterations: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            seed: 20_190_101,
            rel_tol: 1e-4,
            patience: 40,
            max_iterations: 400,
        }
    }
}

/// Fixed-seed random vector with entries uniform in `[-1, 1]`.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Extreme eigenvalues of `B A` from the Lanczos matrix of PCG on a random right-hand side.
pub fn estimate_spectrum(a: &Csr, pre: &dyn Preconditioner, opts: &LanczosOptions) -> SpectralEstimate {
    let b = random_vector(a.nrows(), opts.seed);
    let mut state = Pcg::new(a, &b, pre);
    let mut prev: Option<(f64, f64)> = None;
    let mut settled = 0;
    let mut last = (f64::NAN, f64::NAN);
    let mut converged = false;
    while state.iterations() < opts.max_iterations.min(a.nrows()) {
        if !state.step() {
            converged = true;
            break;
        }
        let cur = state_extremes(&state);
        last = cur;
        if let Some(p) = prev {
            let dmin = ((cur.0 - p.0) / cur.0).abs();
            let dmax = ((cur.1 - p.1) / cur.1).abs();
            if dmin < opts.rel_tol && dmax < opts.rel_tol {
                settled += 1;
                if settled >= opts.patience {
                    converged = true;
                    break;
                }
            } else {
                settled = 0;
            }
        }
        prev = Some(cur);
        // invariant subspace found
        if state.ratio() < 1e-15 {
            converged = true;
            break;
        }
    }
    if state.iterations() >= a.nrows() {
        converged = true;
    }
    SpectralEstimate {
        lambda_min: last.0,
        lambda_max: last.1,
        iterations: state.iterations(),
        converged,
    }
}

fn state_extremes(state: &Pcg) -> (f64, f64) {
    Tridiagonal::from_cg(&state.alphas, &state.betas).extremes()
}

/// Dense matrix of a preconditioner, column by column.
pub fn dense_operator(n: usize, pre: &dyn Preconditioner) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = pre.apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// All eigenvalues of `B A` (ascending) for symmetric positive definite `A` and symmetric
/// `B`, via `L^T B L` with `A = L L^T`.
pub fn dense_spectrum(a: &Csr, pre: &dyn Preconditioner) -> Result<Vec<f64>> {
    let n = a.nrows();
    let b = dense_operator(n, pre);
    let b = (&b + b.transpose()) * 0.5;
    let l = a
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?
        .l();
    let m = l.transpose() * b * &l;
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of a symmetric sparse matrix (ascending), dense.
pub fn dense_eigenvalues(a: &Csr) -> Vec<f64> {
    let d = a.to_dense();
    let d = (&d + d.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of `A` by Lanczos on `A^{-1}`, with inverses applied by PCG
/// preconditioned with `pre` to relative tolerance `inner_tol`.
pub fn smallest_eigenvalue_inverse(
    a: &Csr,
    pre: &dyn Preconditioner,
    inner_tol: f64,
    opts: &LanczosOptions,
) -> SpectralEstimate {
    let n = a.nrows();
    let solve = |v: &[f64]| pcg(a, v, pre, inner_tol, 10_000).x;
    let mut q = random_vector(n, opts.seed);
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nq);
    let mut q_prev = vec![0.0; n];
    let mut t = Tridiagonal::default();
    let mut beta_prev = 0.0;
    let mut prev = f64::NAN;
    let mut settled = 0;
    let mut converged = false;
    let mut mu = f64::NAN;
    for _ in 0..opts.max_iterations.min(n) {
        let mut w = solve(&q);
        let alpha = dot(&w, &q);
        for i in 0..n {
            w[i] -= alpha * q[i] + beta_prev * q_prev[i];
        }
        t.diag.push(alpha);
        mu = t.eigenvalue(t.len() - 1);
        if ((mu - prev) / mu).abs() < opts.rel_tol {
            settled += 1;
            if settled >= opts.patience {
                converged = true;
                break;
            }
        } else {
            settled = 0;
        }
        prev = mu;
        let beta = dot(&w, &w).sqrt();
        if beta <= 1e-14 * mu.abs() {
            converged = true;
            break;
        }
        t.off.push(beta);
        q_prev = std::mem::replace(&mut q, w.iter().map(|v| v / beta).collect());
        beta_prev = beta;
    }
    if t.off.len() >= t.diag.len() {
        t.off.pop();
    }
    SpectralEstimate {
        lambda_min: 1.0 / mu,
        lambda_max: f64::NAN,
        iterations: t.len(),
        converged,
    }
}
