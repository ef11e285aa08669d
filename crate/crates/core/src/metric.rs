//! Limited-memory BFGS variable metric, applied through the two-loop
//! recursion and sandwiched between projections onto the current support.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::problem::SupportSet;

/// Pairs with `<s, y> <= CURVATURE_FLOOR * ||s|| ||y||` are rejected.
pub const CURVATURE_FLOOR: f64 = 1e-12;
/// Default damping `t` added to curvature pairs: `y = grad_diff + t * s`.
pub const DEFAULT_DAMPING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct CurvaturePair {
    s: DVector<f64>,
    y: DVector<f64>,
    rho: f64,
}

/// Memory of `(S_i, Y_i)` pairs realizing the inverse-Hessian approximation.
///
/// A state with capacity zero is the identity metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
    damping: f64,
    frozen: bool,
    freeze_after: Option<usize>,
}

impl MetricState {
    pub fn new(capacity: usize, damping: f64, freeze_after: Option<usize>) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            damping,
            frozen: false,
            freeze_after,
        }
    }

    /// The identity metric; pushes are ignored.
    pub fn identity() -> Self {
        Self::new(0, DEFAULT_DAMPING, None)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze_after(&self) -> Option<usize> {
        self.freeze_after
    }

    /// Stored displacement vectors, oldest first.
    pub fn displacements(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.pairs.iter().map(|p| &p.s)
    }

    /// Builds the damped pair partner `grad_diff + t * s` for displacement `s`.
    pub fn damped_pair(&self, s: &DVector<f64>, grad_diff: &DVector<f64>) -> DVector<f64> {
        grad_diff + s * self.damping
    }

    /// Appends `(s, y)` if it satisfies the curvature condition, evicting the
    /// oldest pair when full. Returns whether the pair was stored.
    pub fn push_pair(&mut self, s: DVector<f64>, y: DVector<f64>) -> Result<bool> {
        check_dim(s.len(), y.len())?;
        if let Some(first) = self.pairs.front() {
            check_dim(first.s.len(), s.len())?;
        }
        if self.frozen || self.capacity == 0 {
            return Ok(false);
        }
        let sy = s.dot(&y);
        let scale = s.norm() * y.norm();
        if !(sy.is_finite() && sy > CURVATURE_FLOOR * scale) || sy <= 0.0 {
            debug!("rejecting curvature pair with <s, y> = {sy:e}");
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
        Ok(true)
    }

    /// `H g` through the two-loop recursion. The initial matrix is
    /// `(<s, y> / <y, y>) I` from the newest pair, identity when empty.
    pub fn apply_metric(&self, g: &DVector<f64>) -> DVector<f64> {
        two_loop(self.pairs.iter().map(|p| (&p.s, &p.y, p.rho)), g)
    }

    /// `-P_s H P_s grad`: the quasi-Newton direction restricted to `C_s`.
    pub fn restricted_direction(&self, grad: &DVector<f64>, s: &SupportSet) -> Result<DVector<f64>> {
        check_dim(s.dim(), grad.len())?;
        let mut g = grad.clone();
        s.project_in_place(&mut g);
        let mut d = -self.apply_metric(&g);
        s.project_in_place(&mut d);
        Ok(d)
    }

    /// Like [`restricted_direction`](Self::restricted_direction), but the
    /// two-loop recursion only uses pairs whose displacement already lies in
    /// `C_s`, with `Y` projected onto `C_s`. For such a pair `P Y` is exactly
    /// the support block of the Hessian applied to `S`, so the metric
    /// approximates the inverse of that block rather than the support block of
    /// the inverse Hessian.
    pub fn support_direction(&self, grad: &DVector<f64>, s: &SupportSet) -> Result<DVector<f64>> {
        check_dim(s.dim(), grad.len())?;
        let mut projected = Vec::with_capacity(self.pairs.len());
        for pair in &self.pairs {
            if s.zero_indices().iter().any(|&i| pair.s[i] != 0.0) {
                continue;
            }
            let ps = pair.s.clone();
            let mut py = pair.y.clone();
            s.project_in_place(&mut py);
            let sy = ps.dot(&py);
            if sy.is_finite() && sy > CURVATURE_FLOOR * ps.norm() * py.norm() && sy > 0.0 {
                projected.push((ps, py, 1.0 / sy));
            }
        }
        let mut g = grad.clone();
        s.project_in_place(&mut g);
        let mut d = -two_loop(projected.iter().map(|(ps, py, rho)| (ps, py, *rho)), &g);
        s.project_in_place(&mut d);
        Ok(d)
    }

    /// Freezes the memory once `k` reaches the configured iteration.
    pub fn maybe_freeze(&mut self, k: usize) {
        if let Some(k1) = self.freeze_after {
            if k >= k1 {
                self.frozen = true;
            }
        }
    }
}

fn two_loop<'a, I>(pairs: I, g: &DVector<f64>) -> DVector<f64>
where
    I: DoubleEndedIterator<Item = (&'a DVector<f64>, &'a DVector<f64>, f64)> + Clone,
{
    let mut q = g.clone();
    let mut alphas = Vec::new();
    for (s, y, rho) in pairs.clone().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((_, y, rho)) = pairs.clone().next_back() {
        q *= 1.0 / (rho * y.norm_squared());
    }
    for ((s, y, rho), a) in pairs.zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}
