//! Exhaustive ground truth for tiny instances: every support pattern is
//! enumerated, which is only feasible for `n <= MAX_ORACLE_DIM`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{L0Problem, QuadraticObjective, SmoothObjective};

pub const MAX_ORACLE_DIM: usize = 14;
/// Restricted normal equations with a larger condition number fall back to
/// the pseudo-inverse.
pub const PINV_CONDITION: f64 = 1e12;

/// Least-squares minimizer of `f` over one support pattern.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    /// Coordinates allowed to be nonzero.
    pub support: Vec<usize>,
    pub x: DVector<f64>,
    /// `H(x)`.
    pub objective: f64,
    /// Vanishing restricted gradient and a zero pattern equal to the support.
    pub is_local: bool,
    /// The restricted normal equations were singular or ill-conditioned and
    /// the minimum-norm solution was taken.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerTable {
    pub candidates: Vec<Candidate>,
    /// Index of the local minimizer with the smallest objective.
    pub global: usize,
}

impl MinimizerTable {
    pub fn local_minimizers(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.is_local)
    }

    pub fn global_minimizer(&self) -> &Candidate {
        &self.candidates[self.global]
    }

    /// Euclidean distance from `x` to the closest local minimizer.
    pub fn distance_to_local(&self, x: &DVector<f64>) -> f64 {
        self.local_minimizers()
            .map(|c| (&c.x - x).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_ORACLE_DIM {
        Err(Error::TooLarge {
            n,
            max: MAX_ORACLE_DIM,
        })
    } else {
        Ok(())
    }
}

fn mask_indices(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask & (1 << i) != 0).collect()
}

/// Solves `min ||A_S z - b||` for the columns in `support`; returns the
/// solution and whether the pseudo-inverse fallback was used.
fn restricted_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, support: &[usize]) -> (DVector<f64>, bool) {
    let k = support.len();
    let a_s = a.select_columns(support);
    let gram = a_s.tr_mul(&a_s);
    let rhs = a_s.tr_mul(b);
    let eig = SymmetricEigen::new(gram.clone());
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if min_eig > 0.0 && max_eig / min_eig <= PINV_CONDITION {
        if let Some(chol) = gram.cholesky() {
            return (chol.solve(&rhs), false);
        }
    }
    let cutoff = max_eig.max(0.0) * 1e-12;
    let mut z = DVector::zeros(k);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.eigenvectors.column(i);
            z += v * (v.dot(&rhs) / lambda);
        }
    }
    (z, true)
}

/// Enumerates all `2^n` support patterns of a least-squares `l0` problem.
pub fn enumerate_minimizers(prob: &L0Problem<QuadraticObjective>) -> Result<MinimizerTable> {
    let n = prob.dim();
    check_size(n)?;
    let obj = prob.smooth();
    let (a, b) = (obj.matrix(), obj.rhs());
    let mut candidates = Vec::with_capacity(1 << n);
    for mask in 0..(1usize << n) {
        let support = mask_indices(mask, n);
        let mut x = DVector::zeros(n);
        let mut degenerate = false;
        if !support.is_empty() {
            let (z, pinv) = restricted_least_squares(a, b, &support);
            degenerate = pinv;
            for (&i, &v) in support.iter().zip(z.iter()) {
                x[i] = v;
            }
        }
        let grad = obj.gradient(&x);
        let scale = obj.atb().amax().max(1.0);
        let stationary = support.iter().all(|&i| grad[i].abs() <= 1e-8 * scale);
        let x_scale = x.amax().max(1.0);
        let pattern_matches = support.iter().all(|&i| x[i].abs() > 1e-14 * x_scale);
        candidates.push(Candidate {
            objective: prob.objective(&x),
            support,
            x,
            is_local: stationary && pattern_matches,
            degenerate,
        });
    }
    let global = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_local)
        .min_by(|(_, p), (_, q)| p.objective.total_cmp(&q.objective))
        .map(|(i, _)| i)
        // the empty support is always a local minimizer
        .unwrap_or(0);
    Ok(MinimizerTable { candidates, global })
}

/// Objective of the proximal subproblem at `y`:
/// `lambda ||x||_0 + L/2 ||x - y + grad f(y)/L||^2 + mu/2 ||x - y||^2`.
pub fn prox_objective<F: SmoothObjective>(
    smooth: &F,
    lambda: f64,
    mu: f64,
    y: &DVector<f64>,
    grad_y: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let l = smooth.lipschitz();
    let nnz = x.iter().filter(|v| **v != 0.0).count() as f64;
    let lin = x - y + grad_y / l;
    lambda * nnz + 0.5 * l * lin.norm_squared() + 0.5 * mu * (x - y).norm_squared()
}

/// Exact minimizer of the proximal subproblem at `y` by enumeration.
pub fn prox_bruteforce<F: SmoothObjective>(prob: &L0Problem<F>, y: &DVector<f64>) -> Result<DVector<f64>> {
    prox_bruteforce_with(prob.smooth(), prob.lambda(), prob.mu(), y)
}

/// [`prox_bruteforce`] with explicit `lambda >= 0` and `mu >= 0`.
pub fn prox_bruteforce_with<F: SmoothObjective>(
    smooth: &F,
    lambda: f64,
    mu: f64,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = y.len();
    check_size(n)?;
    crate::error::check_dim(smooth.dim(), n)?;
    let grad = smooth.gradient(y);
    let l = smooth.lipschitz();
    // unconstrained minimizer of the separable quadratic, coordinate-wise
    let free: DVector<f64> = DVector::from_fn(n, |i, _| (l * (y[i] - grad[i] / l) + mu * y[i]) / (l + mu));
    let mut best = DVector::zeros(n);
    let mut best_value = f64::INFINITY;
    for mask in 0..(1usize << n) {
        let x = DVector::from_fn(n, |i, _| if mask & (1 << i) != 0 { free[i] } else { 0.0 });
        let value = prox_objective(smooth, lambda, mu, y, &grad, &x);
        if value < best_value {
            best_value = value;
            best = x;
        }
    }
    Ok(best)
}
