//! Objectives, the hard-thresholding proximal map, support bookkeeping and
//! the local-minimizer certificate for `min_x f(x) + lambda * ||x||_0`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative safety margin applied to power-iteration estimates of `L`.
pub const LIPSCHITZ_MARGIN: f64 = 0.01;
/// Number of power iterations used by [`QuadraticObjective::new`].
pub const LIPSCHITZ_ITERS: usize = 100;
/// Seed used by [`QuadraticObjective::new`] for the power-iteration start vector.
pub const LIPSCHITZ_SEED: u64 = 0x5eed;
/// Lower bound on `L`; keeps the threshold finite for a zero matrix.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Smooth convex part `f` of the composite objective.
pub trait SmoothObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Value and gradient in one pass. Implementors should override this when
    /// the two share work.
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), self.gradient(x))
    }

    /// An upper bound on the Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    /// Downcast hook used by solvers that exploit the least-squares structure
    /// (exact line search).
    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }
}

impl<T: SmoothObjective + ?Sized> SmoothObjective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (**self).value(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(x)
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (**self).value_and_gradient(x)
    }

    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        (**self).as_quadratic()
    }
}

/// `f(x) = 0.5 * ||A x - b||^2` with cached `A^T b` and Lipschitz constant.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: DMatrix<f64>,
    b: DVector<f64>,
    atb: DVector<f64>,
    lipschitz: f64,
}

impl QuadraticObjective {
    /// Builds the objective and estimates `L` by seeded power iteration.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let lipschitz = estimate_lipschitz(&a, LIPSCHITZ_ITERS, LIPSCHITZ_SEED)?;
        Self::with_lipschitz(a, b, lipschitz)
    }

    /// Builds the objective with a caller-supplied Lipschitz constant.
    pub fn with_lipschitz(a: DMatrix<f64>, b: DVector<f64>, lipschitz: f64) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic objective data"));
        }
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "Lipschitz constant must be finite and nonnegative, got {lipschitz}"
            )));
        }
        let atb = a.tr_mul(&b);
        Ok(Self {
            a,
            b,
            atb,
            lipschitz: lipschitz.max(LIPSCHITZ_FLOOR),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn atb(&self) -> &DVector<f64> {
        &self.atb
    }

    /// `||A d||^2`, the curvature of `f` along `d`.
    pub fn curvature(&self, d: &DVector<f64>) -> f64 {
        (&self.a * d).norm_squared()
    }

    /// `A^T A v`.
    pub fn gram_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * v))
    }

    /// The seminorm `||v||_{A^T A} = ||A v||`.
    pub fn gram_norm(&self, v: &DVector<f64>) -> f64 {
        (&self.a * v).norm()
    }
}

impl SmoothObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * x)) - &self.atb
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let ax = &self.a * x;
        let value = 0.5 * (&ax - &self.b).norm_squared();
        let grad = self.a.tr_mul(&ax) - &self.atb;
        (value, grad)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}

/// `min_x f(x) + lambda * ||x||_0` together with the proximal weight `mu`.
#[derive(Debug, Clone)]
pub struct L0Problem<F> {
    smooth: F,
    lambda: f64,
    mu: f64,
}

impl<F: SmoothObjective> L0Problem<F> {
    pub fn new(smooth: F, lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "mu must be nonnegative and finite, got {mu}"
            )));
        }
        let prob = Self { smooth, lambda, mu };
        let gamma = prob.threshold();
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "threshold sqrt(2 lambda / (L + mu)) = {gamma} is not positive and finite"
            )));
        }
        Ok(prob)
    }

    pub fn smooth(&self) -> &F {
        &self.smooth
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz()
    }

    /// Proximal step size `1 / (L + mu)`.
    pub fn step(&self) -> f64 {
        1.0 / (self.smooth.lipschitz() + self.mu)
    }

    /// Hard-threshold level `sqrt(2 lambda / (L + mu))`.
    pub fn threshold(&self) -> f64 {
        (2.0 * self.lambda * self.step()).sqrt()
    }

    /// `H(x) = f(x) + lambda * ||x||_0`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth.value(x) + self.penalty(x)
    }

    /// `lambda * ||x||_0`.
    pub fn penalty(&self, x: &DVector<f64>) -> f64 {
        self.lambda * l0_norm(x) as f64
    }

    /// Same problem with a different `lambda`; used along regularization paths.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self>
    where
        F: Clone,
    {
        Self::new(self.smooth.clone(), lambda, self.mu)
    }
}

/// Number of nonzero entries.
pub fn l0_norm(x: &DVector<f64>) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// Componentwise hard thresholding: keeps `c_i` when `|c_i| > gamma`, zero
/// otherwise. Ties at `|c_i| == gamma` map to zero.
pub fn hard_threshold(c: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be positive and finite, got {gamma}"
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hard_threshold input"));
    }
    Ok(c.map(|v| if v.abs() > gamma { v } else { 0.0 }))
}

/// One proximal iterative hard-thresholding step from `y`:
/// `H_gamma(y - grad f(y) / (L + mu))`.
pub fn piht_step<F: SmoothObjective>(prob: &L0Problem<F>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(prob.dim(), y.len())?;
    let grad = prob.smooth().gradient(y);
    piht_step_with_gradient(prob, y, &grad)
}

/// [`piht_step`] with a precomputed gradient at `y`.
pub fn piht_step_with_gradient<F: SmoothObjective>(
    prob: &L0Problem<F>,
    y: &DVector<f64>,
    grad: &DVector<f64>,
) -> Result<DVector<f64>> {
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let forward = y - grad * prob.step();
    hard_threshold(&forward, prob.threshold())
}

/// The zero set `I(x)` of a vector, i.e. the coordinates that the subspace
/// `C_I` pins to zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    zero_indices: Vec<usize>,
    dim: usize,
}

impl SupportSet {
    /// `zero_indices` must be strictly increasing and below `dim`.
    pub fn new(zero_indices: Vec<usize>, dim: usize) -> Result<Self> {
        if zero_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("zero indices must be strictly increasing".into()));
        }
        if let Some(&last) = zero_indices.last() {
            if last >= dim {
                return Err(Error::InvalidInput(format!(
                    "zero index {last} out of range for dimension {dim}"
                )));
            }
        }
        Ok(Self { zero_indices, dim })
    }

    /// Builds the set from the nonzero (free) coordinates instead.
    pub fn from_nonzeros(nonzeros: &[usize], dim: usize) -> Result<Self> {
        let mut free = vec![false; dim];
        for &i in nonzeros {
            if i >= dim {
                return Err(Error::InvalidInput(format!(
                    "support index {i} out of range for dimension {dim}"
                )));
            }
            free[i] = true;
        }
        let zero_indices = (0..dim).filter(|&i| !free[i]).collect();
        Ok(Self { zero_indices, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn zero_indices(&self) -> &[usize] {
        &self.zero_indices
    }

    /// Complement of the zero set: the coordinates allowed to be nonzero.
    pub fn nonzero_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim - self.zero_indices.len());
        let mut zeros = self.zero_indices.iter().peekable();
        for i in 0..self.dim {
            if zeros.peek() == Some(&&i) {
                zeros.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    pub fn support_size(&self) -> usize {
        self.dim - self.zero_indices.len()
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.zero_indices.binary_search(&i).is_ok()
    }

    /// In-place projection onto `C_I`.
    pub fn project_in_place(&self, x: &mut DVector<f64>) {
        for &i in &self.zero_indices {
            x[i] = 0.0;
        }
    }
}

/// `I(x) = { i : |x_i| <= tol }`.
pub fn support_of(x: &DVector<f64>, tol: f64) -> SupportSet {
    let tol = tol.max(0.0);
    let zero_indices = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == 0.0 || v.abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    SupportSet {
        zero_indices,
        dim: x.len(),
    }
}

/// Orthogonal projection onto `C_I`: zeroes the coordinates in `I`.
pub fn project_support(x: &DVector<f64>, s: &SupportSet) -> Result<DVector<f64>> {
    check_dim(s.dim(), x.len())?;
    let mut out = x.clone();
    s.project_in_place(&mut out);
    Ok(out)
}

/// Upper estimate of `lambda_max(A^T A)` by seeded power iteration, inflated
/// by [`LIPSCHITZ_MARGIN`] and floored at [`LIPSCHITZ_FLOOR`].
pub fn estimate_lipschitz(a: &DMatrix<f64>, iters: usize, seed: u64) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput("cannot estimate Lipschitz constant of an empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: DVector<f64> = DVector::from_fn(a.ncols(), |_, _| StandardNormal.sample(&mut rng));
    let mut estimate = 0.0_f64;
    for _ in 0..iters.max(1) {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v /= norm;
        let w = a.tr_mul(&(a * &v));
        // Rayleigh quotient of the unit vector v
        estimate = v.dot(&w);
        v = w;
    }
    Ok((estimate * (1.0 + LIPSCHITZ_MARGIN)).max(LIPSCHITZ_FLOOR))
}

/// Residuals of the first-order local-minimizer conditions at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `max |grad f(x)_i|` over the nonzero coordinates of `x`.
    pub gradient_residual: f64,
    /// `min |x_i| - gamma` over the nonzero coordinates; `None` for `x = 0`.
    pub magnitude_margin: Option<f64>,
    /// Whether `x` is a fixed point of the hard-thresholded gradient map
    /// within the tolerance.
    pub fixed_point: bool,
    pub passed: bool,
}

/// Checks the local-minimizer conditions: vanishing gradient on the support
/// and `x in H_gamma(x - grad f(x) / (L + mu))` entrywise within `tol`.
pub fn local_min_certificate<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x: &DVector<f64>,
    tol: f64,
) -> Certificate {
    if x.len() != prob.dim() || x.iter().any(|v| !v.is_finite()) {
        return Certificate {
            gradient_residual: f64::INFINITY,
            magnitude_margin: None,
            fixed_point: false,
            passed: false,
        };
    }
    let grad = prob.smooth().gradient(x);
    certificate_with_gradient(prob, x, &grad, tol)
}

pub(crate) fn certificate_with_gradient<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    tol: f64,
) -> Certificate {
    let gamma = prob.threshold();
    let step = prob.step();
    let mut gradient_residual = 0.0_f64;
    let mut min_magnitude: Option<f64> = None;
    let mut fixed_point = grad.iter().all(|g| g.is_finite());
    for (&xi, &gi) in x.iter().zip(grad.iter()) {
        let forward = xi - gi * step;
        if xi != 0.0 {
            gradient_residual = gradient_residual.max(gi.abs());
            min_magnitude = Some(min_magnitude.map_or(xi.abs(), |m| m.min(xi.abs())));
            // the map must keep this coordinate and return x_i
            if (forward - xi).abs() > tol || forward.abs() < gamma - tol {
                fixed_point = false;
            }
        } else if forward.abs() > gamma + tol {
            fixed_point = false;
        }
    }
    let passed = fixed_point && gradient_residual <= tol;
    Certificate {
        gradient_residual,
        magnitude_margin: min_magnitude.map(|m| m - gamma),
        fixed_point,
        passed,
    }
}
