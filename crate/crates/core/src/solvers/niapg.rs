use std::collections::VecDeque;

use nalgebra::DVector;

use super::{check_stop, Method, RunRecord, SolveOptions, StopReason, Tracker};
use crate::error::Result;
use crate::problem::{piht_step_with_gradient, L0Problem, SmoothObjective};

/// The last `q + 1` objective values `F(x_{k-q}), ..., F(x_k)`.
#[derive(Debug, Clone)]
pub struct ObjectiveWindow {
    values: VecDeque<f64>,
    len: usize,
}

impl ObjectiveWindow {
    pub fn new(q: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(q + 1),
            len: q + 1,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.len {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// `Delta_k`, the maximum over the window.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Nonconvex inexact APG with a single (exact) proximal step per iteration.
pub fn solve_niapg<F: SmoothObjective>(
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    let mut tracker = Tracker::start(Method::Niapg, prob, x0, opts)?;
    let smooth = prob.smooth();
    let mut x_prev = x0.clone();
    let mut x = x0.clone();
    let mut window = ObjectiveWindow::new(opts.window);
    window.push(prob.objective(&x));

    for k in 1..=opts.max_iters {
        let weight = (k - 1) as f64 / k as f64;
        let y = &x + (&x - &x_prev) * weight;
        let (f_y, grad_y) = smooth.value_and_gradient(&y);
        let (v, grad_v) = if f_y + prob.penalty(&y) <= window.max() {
            (y, grad_y)
        } else {
            let g = smooth.gradient(&x);
            (x.clone(), g)
        };
        let next = piht_step_with_gradient(prob, &v, &grad_v)?;
        let h_next = prob.objective(&next);
        tracker.record(&next, &v, h_next)?;
        window.push(h_next);

        let done = check_stop(&next, &v, &x, opts.tol);
        x_prev = std::mem::replace(&mut x, next);
        if done {
            let record = tracker.finish(prob, &x, None, k, StopReason::Converged, opts.tol);
            return Ok((x, record));
        }
    }
    let record = tracker.finish(prob, &x, None, opts.max_iters, StopReason::MaxIters, opts.tol);
    Ok((x, record))
}
