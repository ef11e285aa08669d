use nalgebra::DVector;

use super::{check_stop, Method, RunRecord, SolveOptions, StopReason, Tracker};
use crate::error::Result;
use crate::problem::{piht_step_with_gradient, L0Problem, SmoothObjective};

/// Running weighted average `c_k` of objective values with weight `q_k`:
/// `q_{k+1} = eta q_k + 1`, `c_{k+1} = (eta q_k c_k + F(x_{k+1})) / q_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonmonotoneAverage {
    pub q: f64,
    pub c: f64,
    eta: f64,
}

impl NonmonotoneAverage {
    /// `q_1 = 1`, `c_1 = F(x_1)`.
    pub fn new(eta: f64, first_value: f64) -> Self {
        Self {
            q: 1.0,
            c: first_value,
            eta,
        }
    }

    pub fn update(&mut self, value: f64) {
        let q_next = self.eta * self.q + 1.0;
        self.c = (self.eta * self.q * self.c + value) / q_next;
        self.q = q_next;
    }
}

/// `t_{k+1} = (sqrt(1 + 4 t_k^2) + 1) / 2`.
pub(crate) fn next_momentum(t: f64) -> f64 {
    ((1.0 + 4.0 * t * t).sqrt() + 1.0) / 2.0
}

/// Non-monotone accelerated proximal gradient with hard-thresholding prox.
/// Both proximal steps use `1 / (L + mu)`.
pub fn solve_nmapg<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    let mut tracker = Tracker::start(Method::Nmapg, prob, x0, opts)?;
    let smooth = prob.smooth();
    let mut x_prev = x0.clone();
    let mut x = x0.clone();
    let mut z = x0.clone();
    let mut t_prev = 0.0;
    let mut t = 1.0;
    let mut avg = NonmonotoneAverage::new(opts.eta, prob.objective(&x));

    for k in 1..=opts.max_iters {
        let y = &x + (&z - &x) * (t_prev / t) + (&x - &x_prev) * ((t_prev - 1.0) / t);
        let grad_y = smooth.gradient(&y);
        let z_next = piht_step_with_gradient(prob, &y, &grad_y)?;
        let h_z = prob.objective(&z_next);

        let (next, h_next, anchor) = if h_z <= avg.c - opts.delta_nm * (&z_next - &y).norm_squared() {
            (z_next.clone(), h_z, y)
        } else {
            let grad_x = smooth.gradient(&x);
            let v = piht_step_with_gradient(prob, &x, &grad_x)?;
            let h_v = prob.objective(&v);
            if h_z <= h_v {
                (z_next.clone(), h_z, y)
            } else {
                (v, h_v, x.clone())
            }
        };
        z = z_next;
        tracker.record(&next, &anchor, h_next)?;
        t_prev = t;
        t = next_momentum(t);
        avg.update(h_next);

        let done = check_stop(&next, &x, &x, opts.tol);
        x_prev = std::mem::replace(&mut x, next);
        if done {
            let record = tracker.finish(prob, &x, None, k, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }
    }
    let record = tracker.finish(prob, &x, None, opts.max_iters, StopReason::MaxIters, opts.tol);
    Ok((x, record))
}
