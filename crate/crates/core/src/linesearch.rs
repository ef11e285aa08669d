//! Step lengths along support-restricted directions: the exact minimizing
//! step for least squares and a backtracking rule for general convex `f`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{QuadraticObjective, SmoothObjective, SupportSet};

/// `||A d||^2 <= DEGENERATE_CURVATURE * ||d||^2` is treated as `A d = 0`.
pub const DEGENERATE_CURVATURE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Acceptance factor in (0, 1).
    pub delta: f64,
    pub max_backtracks: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            backtrack: 0.5,
            delta: 0.1,
            max_backtracks: 60,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.backtrack) || !open_unit(self.delta) {
            return Err(Error::InvalidInput(format!(
                "step config needs backtrack and delta in (0, 1), got {} and {}",
                self.backtrack, self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub alpha: f64,
    pub trial_point: DVector<f64>,
    /// Gradient evaluations spent by the search.
    pub evaluations: usize,
}

impl StepResult {
    fn stay(x: &DVector<f64>, evaluations: usize) -> Self {
        Self {
            alpha: 0.0,
            trial_point: x.clone(),
            evaluations,
        }
    }
}

/// Minimizes `f(x + alpha d)` over `alpha` for least squares.
pub fn exact_quadratic_step(
    obj: &QuadraticObjective,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<StepResult> {
    check_dim(obj.dim(), x.len())?;
    let grad = obj.gradient(x);
    exact_quadratic_step_with_gradient(obj, x, &grad, d)
}

/// [`exact_quadratic_step`] with the gradient at `x` supplied by the caller.
pub fn exact_quadratic_step_with_gradient(
    obj: &QuadraticObjective,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<StepResult> {
    check_dim(x.len(), d.len())?;
    check_dim(x.len(), grad.len())?;
    if d.iter().chain(x.iter()).chain(grad.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("exact line search input"));
    }
    let curvature = obj.curvature(d);
    if curvature <= DEGENERATE_CURVATURE * d.norm_squared() {
        return Ok(StepResult::stay(x, 0));
    }
    // a non-descent sign from round-off is clamped to a zero step
    let alpha = (-grad.dot(d) / curvature).max(0.0);
    if alpha == 0.0 {
        return Ok(StepResult::stay(x, 0));
    }
    Ok(StepResult {
        alpha,
        trial_point: x + d * alpha,
        evaluations: 0,
    })
}

/// Backtracking along the restricted quasi-Newton direction `d = -P H P g`.
///
/// Trial steps are `alpha0 * backtrack^i` with
/// `alpha0 = 2 ||P g||^2 / (L <P g, H P g>)`, where `<P g, H P g> = -<P g, d>`.
/// A trial `y` is accepted once `<P grad f(y), d> <= delta <P grad f(x), d>`,
/// i.e. the slope along `d` is still negative at `y`, which keeps `f(y) < f(x)`
/// for convex `f`.
pub fn dong_step<F: SmoothObjective + ?Sized>(
    obj: &F,
    cfg: &StepConfig,
    x: &DVector<f64>,
    d: &DVector<f64>,
    s: &SupportSet,
) -> Result<StepResult> {
    check_dim(obj.dim(), x.len())?;
    let grad = obj.gradient(x);
    dong_step_with_gradient(obj, cfg, x, &grad, d, s)
}

/// [`dong_step`] with the gradient at `x` supplied by the caller.
pub fn dong_step_with_gradient<F: SmoothObjective + ?Sized>(
    obj: &F,
    cfg: &StepConfig,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    d: &DVector<f64>,
    s: &SupportSet,
) -> Result<StepResult> {
    cfg.validate()?;
    check_dim(x.len(), d.len())?;
    check_dim(s.dim(), x.len())?;
    let mut pg = grad.clone();
    s.project_in_place(&mut pg);
    let slope = pg.dot(d);
    if slope == 0.0 {
        return Ok(StepResult::stay(x, 0));
    }
    if !slope.is_finite() || slope > 0.0 {
        return Err(Error::InvalidInput(format!(
            "direction is not a descent direction (slope {slope:e})"
        )));
    }
    let alpha0 = 2.0 * pg.norm_squared() / (obj.lipschitz() * -slope);
    let target = cfg.delta * slope;
    let mut alpha = alpha0;
    let mut evaluations = 0;
    for _ in 0..=cfg.max_backtracks {
        let trial = x + d * alpha;
        let mut trial_grad = obj.gradient(&trial);
        evaluations += 1;
        s.project_in_place(&mut trial_grad);
        let trial_slope = trial_grad.dot(d);
        if trial_slope.is_finite() && trial_slope <= target {
            return Ok(StepResult {
                alpha,
                trial_point: trial,
                evaluations,
            });
        }
        alpha *= cfg.backtrack;
    }
    Err(Error::StepFailure {
        evaluations,
        last_alpha: alpha / cfg.backtrack,
    })
}
