//! Iterative solvers for the l0-regularized problem behind one interface:
//! `(problem, x0, options) -> (solution, RunRecord)`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linesearch::StepConfig;
use crate::metric::DEFAULT_DAMPING;
use crate::problem::{certificate_with_gradient, l0_norm, Certificate, L0Problem, SmoothObjective};

mod nmapg;
mod niapg;
mod npiht;
mod piht;
mod vmepiht;

pub use nmapg::{solve_nmapg, NonmonotoneAverage};
pub use niapg::{solve_niapg, ObjectiveWindow};
pub use npiht::{extrapolate_masked, solve_npiht};
pub use piht::solve_piht;
pub use vmepiht::solve_vmepiht;

/// Converged runs are certified at this multiple of the stopping tolerance.
pub const CERTIFICATE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vmepiht,
    Piht,
    Npiht,
    Nmapg,
    Niapg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Vmepiht,
        Method::Piht,
        Method::Npiht,
        Method::Nmapg,
        Method::Niapg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Vmepiht => "vmepiht",
            Method::Piht => "piht",
            Method::Npiht => "npiht",
            Method::Nmapg => "nmapg",
            Method::Niapg => "niapg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let valid: Vec<_> = Method::ALL.iter().map(Method::name).collect();
                Error::InvalidInput(format!(
                    "unknown method '{s}', expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Step-length rule for the quasi-Newton step of VMEPIHT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Exact step for least squares, backtracking otherwise.
    Auto,
    Exact,
    Dong,
}

/// When the L-BFGS memory stops accepting pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreezeSchedule {
    /// Never for least squares, after 50 iterations otherwise.
    Auto,
    Never,
    After(usize),
}

pub const AUTO_FREEZE_AFTER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmepihtOptions {
    /// L-BFGS memory `T`; zero gives the identity metric.
    pub memory: usize,
    /// Damping `t` in `Y = grad_diff + t S`.
    pub damping: f64,
    pub freeze: FreezeSchedule,
    pub step_rule: StepRule,
    pub step: StepConfig,
    /// Build the metric from curvature pairs projected onto the current
    /// support instead of taking the support block of the full metric.
    pub projected_pairs: bool,
    /// Stop as soon as the iterate passes the local-minimizer certificate.
    pub certificate_stop: bool,
    /// Only accept the step test once the iterate also passes the
    /// certificate at `10 tol`; a stalled iterate is accepted regardless.
    pub confirm_stop: bool,
}

impl Default for VmepihtOptions {
    fn default() -> Self {
        Self {
            memory: 6,
            damping: DEFAULT_DAMPING,
            freeze: FreezeSchedule::Auto,
            step_rule: StepRule::Auto,
            step: StepConfig::default(),
            projected_pairs: true,
            certificate_stop: true,
            confirm_stop: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Extrapolation weight of nPIHT.
    pub omega: f64,
    /// Averaging weight of nmAPG.
    pub eta: f64,
    /// Coefficient of `||z - y||^2` in the nmAPG acceptance test.
    pub delta_nm: f64,
    /// Objective window length `q` of niAPG.
    pub window: usize,
    pub vmepiht: VmepihtOptions,
    /// 0: objective values; 1: plus support sizes; 2: plus full iterates.
    pub trace_level: u8,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 5000,
            omega: 0.9999,
            eta: 0.1,
            delta_nm: 1e-4,
            window: 2,
            vmepiht: VmepihtOptions::default(),
            trace_level: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !self.omega.is_finite() || !self.delta_nm.is_finite() {
            return Err(Error::InvalidInput("omega and delta_nm must be finite".into()));
        }
        self.vmepiht.step.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The relative step test fired, or (VMEPIHT) the iterate passed the
    /// local-minimizer certificate. VMEPIHT confirms the step test with the
    /// certificate unless `confirm_stop` is off.
    Converged,
    MaxIters,
}

impl StopReason {
    pub fn is_converged(&self) -> bool {
        !matches!(self, StopReason::MaxIters)
    }
}

/// Per-run outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub iterations: usize,
    pub wall_time: f64,
    /// `H(x_k)` for every iterate, starting with the first one produced.
    pub objective: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_sizes: Vec<usize>,
    /// Iterates `x_k` (trace level 2).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Vec<f64>>,
    /// The point each `x_k` was produced from by the proximal step (trace level 2).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<Vec<f64>>,
    /// Nonzero coordinates of the returned point.
    pub final_support: Vec<usize>,
    pub final_objective: f64,
    pub certificate: Certificate,
    pub stop_reason: StopReason,
}

/// The relative step test `||x_next - a|| / max(1, ||x||) < tol`.
pub fn check_stop(x_next: &DVector<f64>, a: &DVector<f64>, x: &DVector<f64>, tol: f64) -> bool {
    (x_next - a).norm() / x.norm().max(1.0) < tol
}

/// Runs `method` on `prob` from `x0`.
pub fn solve<F: SmoothObjective>(
    method: Method,
    prob: &L0Problem<F>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, RunRecord)> {
    match method {
        Method::Vmepiht => solve_vmepiht(prob, x0, opts),
        Method::Piht => solve_piht(prob, x0, opts),
        Method::Npiht => solve_npiht(prob, x0, opts),
        Method::Nmapg => solve_nmapg(prob, x0, opts),
        Method::Niapg => solve_niapg(prob, x0, opts),
    }
}

/// Shared bookkeeping for the solver loops.
pub(crate) struct Tracker {
    method: Method,
    start: Instant,
    trace_level: u8,
    objective: Vec<f64>,
    support_sizes: Vec<usize>,
    iterates: Vec<Vec<f64>>,
    anchors: Vec<Vec<f64>>,
}

impl Tracker {
    pub(crate) fn start<F: SmoothObjective>(
        method: Method,
        prob: &L0Problem<F>,
        x0: &DVector<f64>,
        opts: &SolveOptions,
    ) -> Result<Self> {
        opts.validate()?;
        crate::error::check_dim(prob.dim(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial point"));
        }
        Ok(Self {
            method,
            start: Instant::now(),
            trace_level: opts.trace_level,
            objective: Vec::new(),
            support_sizes: Vec::new(),
            iterates: Vec::new(),
            anchors: Vec::new(),
        })
    }

    /// Records iterate `x` with objective `h`, produced by a proximal step
    /// from `anchor`.
    pub(crate) fn record(&mut self, x: &DVector<f64>, anchor: &DVector<f64>, h: f64) -> Result<()> {
        if !h.is_finite() {
            return Err(Error::Divergence {
                iteration: self.objective.len(),
            });
        }
        self.objective.push(h);
        if self.trace_level >= 1 {
            self.support_sizes.push(l0_norm(x));
        }
        if self.trace_level >= 2 {
            self.iterates.push(x.as_slice().to_vec());
            self.anchors.push(anchor.as_slice().to_vec());
        }
        Ok(())
    }

    /// Builds the record; `grad` is the gradient at `x` when already known.
    pub(crate) fn finish<F: SmoothObjective>(
        self,
        prob: &L0Problem<F>,
        x: &DVector<f64>,
        grad: Option<&DVector<f64>>,
        iterations: usize,
        stop_reason: StopReason,
        tol: f64,
    ) -> RunRecord {
        let owned;
        let grad = match grad {
            Some(g) => g,
            None => {
                owned = prob.smooth().gradient(x);
                &owned
            }
        };
        let certificate = certificate_with_gradient(prob, x, grad, CERTIFICATE_FACTOR * tol);
        let final_support = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        RunRecord {
            method: self.method,
            iterations,
            wall_time: self.start.elapsed().as_secs_f64(),
            final_objective: self.objective.last().copied().unwrap_or_else(|| prob.objective(x)),
            objective: self.objective,
            support_sizes: self.support_sizes,
            iterates: self.iterates,
            anchors: self.anchors,
            final_support,
            certificate,
            stop_reason,
        }
    }
}
