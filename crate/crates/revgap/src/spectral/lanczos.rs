//! Matrix-free symmetric Lanczos for the smallest eigenvalue on the
//! mean-zero subspace.
//!
//! The generators handled here are symmetric w.r.t. the uniform measure and
//! have the constant vector in their kernel, so the spectral gap is the
//! smallest eigenvalue of `-G` restricted to mean-zero functions. The
//! constant direction is deflated by re-centering at every step; full
//! (modified Gram-Schmidt) reorthogonalization keeps the basis usable at
//! the iteration counts we need. Ritz values of the tridiagonal matrix are
//! found by Sturm bisection and their residuals by inverse iteration, both
//! O(k) per step.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A self-adjoint operator given by its action on vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOutcome {
    /// Smallest Ritz value (eigenvalue estimate on the mean-zero subspace).
    pub eigenvalue: f64,
    /// Residual bound `|beta_k * s_k|` for the returned Ritz pair.
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Subtracts the mean, projecting out the constant kernel direction.
fn recenter(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= mean;
    }
}

/// Number of eigenvalues of the tridiagonal `(alpha, beta)` strictly below
/// `x`, by the Sturm sequence of leading-principal-minor ratios.
fn sturm_count_below(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0usize;
    let mut d = 1.0f64;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - b2 / d;
        if d < 0.0 {
            count += 1;
        }
        if d.abs() < 1e-300 {
            d = -1e-300;
        }
    }
    count
}

/// Smallest eigenvalue of the symmetric tridiagonal `(alpha, beta)` by
/// bisection on the Gershgorin interval.
pub(crate) fn tridiagonal_smallest(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let mut radius = 0.0;
        if i > 0 {
            radius += beta[i - 1].abs();
        }
        if i + 1 < k {
            radius += beta[i].abs();
        }
        lo = lo.min(alpha[i] - radius);
        hi = hi.max(alpha[i] + radius);
    }
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let mut a = lo - scale * 1e-12;
    let mut b = hi + scale * 1e-12;
    while b - a > 1e-15 * scale {
        let mid = 0.5 * (a + b);
        if sturm_count_below(alpha, beta, mid) >= 1 {
            b = mid;
        } else {
            a = mid;
        }
        if b - a < f64::EPSILON * mid.abs() {
            break;
        }
    }
    0.5 * (a + b)
}

/// Normalized eigenvector of the tridiagonal for the eigenvalue `theta`, by
/// inverse iteration with a partially pivoted tridiagonal solve.
pub(crate) fn tridiagonal_eigenvector(alpha: &[f64], beta: &[f64], theta: f64) -> Vec<f64> {
    let k = alpha.len();
    if k == 1 {
        return vec![1.0];
    }
    let scale = alpha
        .iter()
        .map(|a| a.abs())
        .fold(1.0f64, f64::max);
    let mut v: Vec<f64> = (0..k).map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0 + 0.5).collect();
    for _ in 0..3 {
        solve_shifted(alpha, beta, theta + scale * 1e-14, &mut v);
        let nv = norm(&v);
        if !nv.is_finite() || nv == 0.0 {
            // direct hit on the eigenvalue; restart from a different vector
            v = (0..k).map(|i| ((i * 97 + 13) % 101) as f64 / 101.0 + 0.1).collect();
            continue;
        }
        for x in &mut v {
            *x /= nv;
        }
    }
    v
}

/// Solves `(T - shift) x = b` in place for tridiagonal T, Gaussian
/// elimination with partial pivoting (fill-in bandwidth 2).
fn solve_shifted(alpha: &[f64], beta: &[f64], shift: f64, b: &mut Vec<f64>) {
    let k = alpha.len();
    let mut d: Vec<f64> = alpha.iter().map(|a| a - shift).collect();
    let mut du: Vec<f64> = (0..k - 1).map(|i| beta[i]).collect();
    let mut du2 = vec![0.0f64; k.saturating_sub(2)];
    let mut dl: Vec<f64> = (0..k - 1).map(|i| beta[i]).collect();
    // forward elimination
    for i in 0..k - 1 {
        if d[i].abs() >= dl[i].abs() {
            // no pivot
            let piv = if d[i] != 0.0 { d[i] } else { 1e-300 };
            let m = dl[i] / piv;
            d[i + 1] -= m * du[i];
            if i + 2 < k {
                // du2 stays 0 in the non-pivoting branch
            }
            dl[i] = m; // store multiplier
            b[i + 1] -= m * b[i];
        } else {
            // swap rows i and i+1
            let m = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - m * tmp;
            du[i] = tmp;
            if i + 2 < k {
                du2[i] = du[i + 1];
                du[i + 1] = -m * du2[i];
            }
            b.swap(i, i + 1);
            b[i + 1] -= m * b[i];
            dl[i] = m;
        }
    }
    // back substitution
    let last = k - 1;
    b[last] /= if d[last] != 0.0 { d[last] } else { 1e-300 };
    if k >= 2 {
        let i = k - 2;
        b[i] = (b[i] - du[i] * b[i + 1]) / if d[i] != 0.0 { d[i] } else { 1e-300 };
    }
    for i in (0..k.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2])
            / if d[i] != 0.0 { d[i] } else { 1e-300 };
    }
}

/// Runs Lanczos on the mean-zero subspace of `op` and returns the smallest
/// Ritz value once its residual bound drops below the tolerance.
pub fn smallest_in_meanzero(op: &dyn LinearOperator, opts: &LanczosOptions) -> Result<LanczosOutcome> {
    let dim = op.dim();
    if dim < 2 {
        return Err(Error::InvalidParams("operator dimension must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    recenter(&mut v);
    let nv = norm(&v);
    for x in &mut v {
        *x /= nv;
    }

    let max_iter = opts.max_iterations.min(dim - 1).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    basis.push(v);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut betas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut w = vec![0.0f64; dim];

    let mut best = LanczosOutcome {
        eigenvalue: f64::NAN,
        residual: f64::INFINITY,
        iterations: 0,
    };

    for k in 0..max_iter {
        op.apply(&basis[k], &mut w);
        recenter(&mut w);
        let alpha = dot(&basis[k], &w);
        alphas.push(alpha);
        // three-term recurrence
        for (wi, vi) in w.iter_mut().zip(&basis[k]) {
            *wi -= alpha * vi;
        }
        if k > 0 {
            let beta_prev = betas[k - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[k - 1]) {
                *wi -= beta_prev * vi;
            }
        }
        // full reorthogonalization (modified Gram-Schmidt, second pass if
        // cancellation was severe)
        let before = norm(&w);
        for u in &basis {
            let c = dot(u, &w);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
        if norm(&w) < 0.5 * before {
            for u in &basis {
                let c = dot(u, &w);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
        }
        recenter(&mut w);

        let beta = norm(&w);
        let theta = tridiagonal_smallest(&alphas, &betas);
        let breakdown = beta <= 1e-12 * alpha.abs().max(1.0);
        let residual = if breakdown {
            0.0
        } else {
            let s = tridiagonal_eigenvector(&alphas, &betas, theta);
            beta * s[s.len() - 1].abs()
        };
        if residual < best.residual {
            best = LanczosOutcome {
                eigenvalue: theta,
                residual,
                iterations: k + 1,
            };
        }
        if best.residual <= opts.tolerance || breakdown {
            return Ok(LanczosOutcome {
                eigenvalue: theta,
                residual,
                iterations: k + 1,
            });
        }
        betas.push(beta);
        let mut next = std::mem::take(&mut w);
        for x in &mut next {
            *x /= beta;
        }
        basis.push(next);
        w = vec![0.0f64; dim];
    }

    Err(Error::ConvergenceFailure {
        iterations: best.iterations,
        residual: best.residual,
    })
}
