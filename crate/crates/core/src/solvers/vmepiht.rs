use nalgebra::DVector;

use super::{
    check_stop, FreezeSchedule, Method, RunRecord, SolveOptions, StepRule, StopReason, Tracker,
    AUTO_FREEZE_AFTER,
};
use crate::error::{Error, Result};
use crate::linesearch::{dong_step_with_gradient, exact_quadratic_step_with_gradient};
use crate::metric::MetricState;
use crate::problem::{certificate_with_gradient, piht_step_with_gradient, support_of, L0Problem, SmoothObjective};

/// The step test is confirmed by the certificate at this multiple of `tol`.
pub const CONFIRM_FACTOR: f64 = 10.0;

/// Variable-metric extrapolation PIHT.
///
/// Each iteration takes a hard-thresholding step `x_k = H_gamma(y_k - grad f(y_k) / (L + mu))`,
/// which fixes a candidate support, then a quasi-Newton step restricted to
/// that support, `y_{k+1} = x_k + alpha_k d_k` with `d_k = -P H_k P grad f(x_k)`.
/// The L-BFGS memory is fed with every displacement of the alternating
/// sequence `y_k, x_k, y_{k+1}, ...`.
pub fn solve_vmepiht<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    let mut tracker = Tracker::start(Method::Vmepiht, prob, x0, opts)?;
    let smooth = prob.smooth();
    let vopts = &opts.vmepiht;
    let quadratic = smooth.as_quadratic();
    let exact = match vopts.step_rule {
        StepRule::Auto => quadratic,
        StepRule::Exact => Some(quadratic.ok_or_else(|| {
            Error::InvalidInput("exact step rule needs a least-squares objective".into())
        })?),
        StepRule::Dong => None,
    };
    let freeze_after = match vopts.freeze {
        FreezeSchedule::Auto if quadratic.is_some() => None,
        FreezeSchedule::Auto => Some(AUTO_FREEZE_AFTER),
        FreezeSchedule::Never => None,
        FreezeSchedule::After(k) => Some(k),
    };
    let mut metric = MetricState::new(vopts.memory, vopts.damping, freeze_after);

    let y = x0.clone();
    let grad_y = smooth.gradient(&y);
    let mut x = piht_step_with_gradient(prob, &y, &grad_y)?;
    let (f_x, mut grad_x) = smooth.value_and_gradient(&x);
    tracker.record(&x, &y, f_x + prob.penalty(&x))?;
    push_displacement(&mut metric, &y, &x, &grad_y, &grad_x)?;

    for k in 1..=opts.max_iters {
        metric.maybe_freeze(k);
        if vopts.certificate_stop && certificate_with_gradient(prob, &x, &grad_x, opts.tol).passed {
            let record = tracker.finish(prob, &x, Some(&grad_x), k - 1, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }

        let support = support_of(&x, 0.0);
        let d = if vopts.projected_pairs {
            metric.support_direction(&grad_x, &support)?
        } else {
            metric.restricted_direction(&grad_x, &support)?
        };
        let step = match exact {
            Some(q) => exact_quadratic_step_with_gradient(q, &x, &grad_x, &d)?,
            None => dong_step_with_gradient(smooth, &vopts.step, &x, &grad_x, &d, &support)?,
        };
        let y = step.trial_point;
        let grad_y = if step.alpha > 0.0 {
            let g = smooth.gradient(&y);
            push_displacement(&mut metric, &x, &y, &grad_x, &g)?;
            g
        } else {
            grad_x.clone()
        };

        let x_next = piht_step_with_gradient(prob, &y, &grad_y)?;
        let (f_next, grad_next) = smooth.value_and_gradient(&x_next);
        tracker.record(&x_next, &y, f_next + prob.penalty(&x_next))?;
        push_displacement(&mut metric, &y, &x_next, &grad_y, &grad_next)?;

        let mut done = check_stop(&x_next, &y, &x, opts.tol);
        if done && vopts.confirm_stop && x_next != x {
            // a small step alone does not bound the gradient on the support
            done = certificate_with_gradient(prob, &x_next, &grad_next, CONFIRM_FACTOR * opts.tol).passed;
        }
        x = x_next;
        grad_x = grad_next;
        if done {
            let record = tracker.finish(prob, &x, Some(&grad_x), k, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }
    }
    let record = tracker.finish(prob, &x, Some(&grad_x), opts.max_iters, StopReason::MaxIters, opts.tol);
    Ok((x, record))
}

/// Pushes `S = to - from`, `Y = grad(to) - grad(from) + t S`.
fn push_displacement(
    metric: &mut MetricState,
    from: &DVector<f64>,
    to: &DVector<f64>,
    grad_from: &DVector<f64>,
    grad_to: &DVector<f64>,
) -> Result<()> {
    let s = to - from;
    if s.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    let y = metric.damped_pair(&s, &(grad_to - grad_from));
    metric.push_pair(s, y)?;
    Ok(())
}
