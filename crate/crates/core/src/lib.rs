//! Solvers for `min_x f(x) + lambda ||x||_0` with smooth convex `f`:
//! variable-metric extrapolated hard thresholding (VMEPIHT) and the
//! PIHT, nPIHT, nmAPG and niAPG baselines, plus a brute-force oracle for tiny
//! instances and a compressive-sensing benchmark harness.

pub mod bench;
pub mod error;
pub mod linesearch;
pub mod metric;
pub mod oracle;
pub mod problem;
pub mod solvers;

pub use error::{Error, Result};
pub use problem::{
    hard_threshold, l0_norm, local_min_certificate, piht_step, project_support, support_of, Certificate, L0Problem,
    QuadraticObjective, SmoothObjective, SupportSet,
};
pub use solvers::{solve, Method, RunRecord, SolveOptions, StopReason};
