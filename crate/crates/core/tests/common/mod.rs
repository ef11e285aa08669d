#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Dense `lambda_max(A^T A)`, independent of the power iteration under test.
pub fn dense_lipschitz(a: &DMatrix<f64>) -> f64 {
    a.tr_mul(a).symmetric_eigen().eigenvalues.max()
}

/// `H = 1/2 ||Ax - b||^2 + lambda ||x||_0` written out directly.
pub fn objective_by_hand(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    0.5 * (a * x - b).norm_squared() + lambda * x.iter().filter(|v| **v != 0.0).count() as f64
}
