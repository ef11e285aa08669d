use nalgebra::DVector;

use super::{check_stop, Method, RunRecord, SolveOptions, StopReason, Tracker};
use crate::error::Result;
use crate::problem::{piht_step_with_gradient, L0Problem, SmoothObjective};

/// `x + |sign(x)| * omega * (x - x_prev)`: momentum only on the nonzero
/// coordinates of `x`.
pub fn extrapolate_masked(x: &DVector<f64>, x_prev: &DVector<f64>, omega: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(x_prev.iter())
            .map(|(&xi, &pi)| if xi != 0.0 { xi + omega * (xi - pi) } else { xi }),
    )
}

/// Extrapolated PIHT with a gradient-based reset of the momentum.
pub fn solve_npiht<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    let mut tracker = Tracker::start(Method::Npiht, prob, x0, opts)?;
    let mut x_prev = x0.clone();
    let mut x = x0.clone();

    for k in 1..=opts.max_iters {
        let mut y = extrapolate_masked(&x, &x_prev, opts.omega);
        let mut grad_y = prob.smooth().gradient(&y);
        if (&y - &x).dot(&grad_y) > 0.0 {
            y = x.clone();
            grad_y = prob.smooth().gradient(&y);
        }
        let next = piht_step_with_gradient(prob, &y, &grad_y)?;
        tracker.record(&next, &y, prob.objective(&next))?;
        let done = check_stop(&next, &y, &x, opts.tol);
        x_prev = std::mem::replace(&mut x, next);
        if done {
            let record = tracker.finish(prob, &x, None, k, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }
    }
    let record = tracker.finish(prob, &x, None, opts.max_iters, StopReason::MaxIters, opts.tol);
    Ok((x, record))
}
