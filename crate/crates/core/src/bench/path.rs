use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATH_LEN: usize = 200;
/// Smallest path value relative to the anchor.
pub const PATH_SPAN: f64 = 1e-10;

/// Geometric regularization path `lambda_j = ||A^T b||_inf^2 * exp(t_j)` with
/// `t_j` evenly spaced from `log 1` to `log 1e-10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub anchor: f64,
    pub values: Vec<f64>,
}

pub fn lambda_path(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LambdaPath> {
    lambda_path_with_len(a, b, DEFAULT_PATH_LEN)
}

pub fn lambda_path_with_len(a: &DMatrix<f64>, b: &DVector<f64>, len: usize) -> Result<LambdaPath> {
    crate::error::check_dim(a.nrows(), b.len())?;
    let anchor = a.tr_mul(b).amax().powi(2);
    if !(anchor.is_finite() && anchor > 0.0) {
        return Err(Error::InvalidInput("A^T b is zero; the lambda path is undefined".into()));
    }
    if len < 2 {
        return Err(Error::InvalidInput(format!("path needs at least 2 points, got {len}")));
    }
    let t_end = PATH_SPAN.ln();
    let values = (0..len)
        .map(|j| anchor * (t_end * j as f64 / (len - 1) as f64).exp())
        .collect();
    Ok(LambdaPath { anchor, values })
}

/// One solved point on the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub rel_err: f64,
    pub support_size: usize,
    /// `f(x)` at the solution.
    pub residual: f64,
}

/// How the path point reported for a run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Smallest relative error against the ground truth.
    Oracle,
    /// Smallest `f(x)` among points with at most this many nonzeros.
    TargetSparsity(usize),
}

/// The `lambda` with the smallest relative error; ties go to the larger `lambda`.
pub fn select_lambda(points: &[PathPoint]) -> Result<f64> {
    select_with(points, Selection::Oracle)
}

pub fn select_with(points: &[PathPoint], selection: Selection) -> Result<f64> {
    let key = |p: &PathPoint| match selection {
        Selection::Oracle => Some(p.rel_err),
        Selection::TargetSparsity(s) => (p.support_size <= s).then_some(p.residual),
    };
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let Some(k) = key(p) else { continue };
        if k.is_nan() {
            continue;
        }
        best = match best {
            Some((bk, bl)) if k > bk || (k == bk && p.lambda <= bl) => Some((bk, bl)),
            _ => Some((k, p.lambda)),
        };
    }
    best.map(|(_, lambda)| lambda)
        .ok_or_else(|| Error::InvalidInput("no eligible path points to select from".into()))
}
