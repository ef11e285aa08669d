use nalgebra::DVector;

use super::{check_stop, Method, RunRecord, SolveOptions, StopReason, Tracker};
use crate::error::Result;
use crate::problem::{piht_step_with_gradient, L0Problem, SmoothObjective};

/// Proximal iterative hard thresholding: `x_{k+1} = H_gamma(x_k - grad f(x_k) / (L + mu))`.
pub fn solve_piht<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    let mut tracker = Tracker::start(Method::Piht, prob, x0, opts)?;
    let mut x = x0.clone();
    let (_, mut grad) = prob.smooth().value_and_gradient(&x);

    for k in 1..=opts.max_iters {
        let next = piht_step_with_gradient(prob, &x, &grad)?;
        let (f_next, grad_next) = prob.smooth().value_and_gradient(&next);
        tracker.record(&next, &x, f_next + prob.penalty(&next))?;
        let done = check_stop(&next, &x, &x, opts.tol);
        x = next;
        grad = grad_next;
        if done {
            let record = tracker.finish(prob, &x, Some(&grad), k, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }
    }
    let record = tracker.finish(prob, &x, Some(&grad), opts.max_iters, StopReason::MaxIters, opts.tol);
    Ok((x, record))
}
