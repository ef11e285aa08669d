//! Compressive-sensing benchmark: seeded instances, a warm-started sweep
//! over a geometric lambda path per (instance, method), lambda selection and
//! aggregate reports.

mod config;
mod instance;
mod path;
mod report;

pub use config::{BenchConfig, FinalRun, SelectionMode, DEFAULT_PATIENCE};
pub use instance::{generate_instance, CsInstance, CsInstanceSpec, Ensemble, NoiseScale};
pub use path::{
    lambda_path, lambda_path_with_len, select_lambda, select_with, LambdaPath, PathPoint, Selection,
    DEFAULT_PATH_LEN, PATH_SPAN,
};
pub use report::{median, summarize, MethodSummary};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{support_of, L0Problem, QuadraticObjective};
use crate::solvers::{solve, Method, RunRecord, SolveOptions, StopReason};

/// Metrics of one solve on the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda_index: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub rel_err: f64,
    pub support_size: usize,
}

/// The selected run of one (instance, seed, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub ensemble: Ensemble,
    pub n: usize,
    pub m: usize,
    pub sparsity: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub lambda_index: Option<usize>,
    pub iterations: Option<usize>,
    pub time_s: Option<f64>,
    pub rel_err: Option<f64>,
    pub support_match: Option<bool>,
    pub record: Option<RunRecord>,
    /// Every path point that was solved, in sweep order.
    pub path: Vec<PathEntry>,
    /// Solver errors, recorded instead of aborting the benchmark.
    pub failures: Vec<String>,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.record.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Sorted by (ensemble, n, seed index, method).
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<MethodSummary>,
}

pub fn relative_error(x: &DVector<f64>, x_true: &DVector<f64>) -> f64 {
    let denom = x_true.norm();
    let diff = (x - x_true).norm();
    if denom > 0.0 {
        diff / denom
    } else {
        diff
    }
}

pub fn support_matches(x: &DVector<f64>, x_true: &DVector<f64>) -> bool {
    support_of(x, 0.0) == support_of(x_true, 0.0)
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;

    let groups: Vec<(CsInstanceSpec, usize)> = cfg
        .instance_specs()
        .into_iter()
        .flat_map(|spec| (0..cfg.seeds).map(move |i| (spec.with_seed(cfg.base_seed + i as u64), i)))
        .collect();

    let nested: Vec<Result<Vec<BenchRow>>> = pool.install(|| {
        groups
            .par_iter()
            .map(|(spec, seed_index)| run_group(cfg, spec, *seed_index))
            .collect()
    });
    let mut rows = Vec::new();
    for group in nested {
        rows.extend(group?);
    }
    rows.sort_by_key(|r| (r.ensemble, r.n, r.seed_index, r.method));
    let summaries = summarize(&rows);
    Ok(BenchReport {
        config: cfg.clone(),
        rows,
        summaries,
    })
}

/// One instance, every method.
fn run_group(cfg: &BenchConfig, spec: &CsInstanceSpec, seed_index: usize) -> Result<Vec<BenchRow>> {
    let inst = generate_instance(spec)?;
    log::info!("instance {} n={} seed={}", spec.ensemble, spec.n, spec.seed);
    let obj = QuadraticObjective::new(inst.a.clone(), inst.b.clone())?;
    let path = lambda_path_with_len(&inst.a, &inst.b, cfg.path_len)?;
    let rows = cfg
        .methods
        .par_iter()
        .map(|&method| run_cell(cfg, &inst, &obj, &path, method, seed_index))
        .collect();
    Ok(rows)
}

fn run_cell(
    cfg: &BenchConfig,
    inst: &CsInstance,
    obj: &QuadraticObjective,
    path: &LambdaPath,
    method: Method,
    seed_index: usize,
) -> BenchRow {
    let spec = &inst.spec;
    let mut row = BenchRow {
        method,
        ensemble: spec.ensemble,
        n: spec.n,
        m: spec.m,
        sparsity: spec.sparsity,
        seed_index,
        seed: spec.seed,
        lambda: None,
        lambda_index: None,
        iterations: None,
        time_s: None,
        rel_err: None,
        support_match: None,
        record: None,
        path: Vec::new(),
        failures: Vec::new(),
    };
    let opts = &cfg.solve;
    let x0 = obj.atb().clone();
    let sweep = sweep_path(obj, path, method, cfg.mu, &x0, &inst.x_true, opts, cfg.patience);
    row.failures = sweep.failures;
    row.path = sweep.entries;

    let selection = match cfg.selection {
        SelectionMode::Oracle => Selection::Oracle,
        SelectionMode::Sparsity => Selection::TargetSparsity(spec.sparsity),
    };
    let lambda = match select_with(&sweep.points, selection) {
        Ok(l) => l,
        Err(e) => {
            row.failures.push(format!("selection: {e}"));
            return row;
        }
    };
    let index = row.path.iter().position(|e| e.lambda == lambda);

    let outcome = match cfg.final_run {
        FinalRun::Cold => L0Problem::new(obj, lambda, cfg.mu).and_then(|prob| solve(method, &prob, &x0, opts)),
        FinalRun::Warm => {
            let k = index.expect("selected lambda comes from the path");
            Ok(sweep.runs[k].clone())
        }
    };
    match outcome {
        Ok((x, record)) => {
            row.lambda = Some(lambda);
            row.lambda_index = index.map(|k| row.path[k].lambda_index);
            row.iterations = Some(record.iterations);
            row.time_s = Some(record.wall_time);
            row.rel_err = Some(relative_error(&x, &inst.x_true));
            row.support_match = Some(support_matches(&x, &inst.x_true));
            row.record = Some(record);
        }
        Err(e) => row.failures.push(format!("final run at lambda {lambda:e}: {e}")),
    }
    row
}

/// A path point counts against the patience budget when its relative error
/// exceeds the best so far by more than this fraction.
pub const STALE_MARGIN: f64 = 1e-3;

struct Sweep {
    points: Vec<PathPoint>,
    entries: Vec<PathEntry>,
    runs: Vec<(DVector<f64>, RunRecord)>,
    failures: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn sweep_path(
    obj: &QuadraticObjective,
    path: &LambdaPath,
    method: Method,
    mu: f64,
    x0: &DVector<f64>,
    x_true: &DVector<f64>,
    opts: &SolveOptions,
    patience: usize,
) -> Sweep {
    let mut out = Sweep {
        points: Vec::new(),
        entries: Vec::new(),
        runs: Vec::new(),
        failures: Vec::new(),
    };
    let mut warm = x0.clone();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    for (j, &lambda) in path.values.iter().enumerate() {
        let solved = L0Problem::new(obj, lambda, mu).and_then(|prob| solve(method, &prob, &warm, opts));
        let (x, record) = match solved {
            Ok(run) => run,
            Err(e) => {
                out.failures.push(format!("lambda[{j}] = {lambda:e}: {e}"));
                continue;
            }
        };
        let rel_err = relative_error(&x, x_true);
        let support_size = record.final_support.len();
        let residual = record.final_objective - lambda * support_size as f64;
        out.points.push(PathPoint {
            lambda,
            rel_err,
            support_size,
            residual,
        });
        out.entries.push(PathEntry {
            lambda_index: j,
            lambda,
            iterations: record.iterations,
            stop_reason: record.stop_reason,
            rel_err,
            support_size,
        });
        warm = x.clone();
        out.runs.push((x, record));

        // plateaus (same support, nearly the same error) do not count as stale
        if rel_err < best {
            best = rel_err;
            stale = 0;
        } else if rel_err > best * (1.0 + STALE_MARGIN) {
            stale += 1;
        }
        if patience > 0 && stale >= patience {
            break;
        }
    }
    out
}

/// Writes `report.json`, `report.csv` and per-panel plot data into `dir`.
/// Returns the written paths.
pub fn write_report(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    written.push(json_path);

    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, report::to_csv(&report.rows))?;
    written.push(csv_path);

    for (name, contents) in report::plot_files(&report.rows, &report.config.methods) {
        let p = dir.join(name);
        fs::write(&p, contents)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchConfig {
        BenchConfig {
            sizes: vec![128],
            seeds: 1,
            methods: vec![Method::Piht],
            path_len: 30,
            patience: 0,
            threads: Some(1),
            ..BenchConfig::desk()
        }
    }

    #[test]
    fn one_method_one_seed_one_row() {
        let report = run_benchmark(&tiny_config()).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert!(row.failures.is_empty(), "{:?}", row.failures);
        assert_eq!(row.path.len(), 30);
        assert!(row.rel_err.unwrap() >= 0.0);
        let best = row.path.iter().map(|e| e.rel_err).fold(f64::INFINITY, f64::min);
        let chosen = row.path[row.lambda_index.unwrap()].rel_err;
        assert_eq!(chosen, best);
        assert_eq!(report.summaries.len(), 1);
    }

    #[test]
    fn patience_truncates_the_sweep() {
        let cfg = BenchConfig {
            patience: 3,
            path_len: 200,
            ..tiny_config()
        };
        let report = run_benchmark(&cfg).unwrap();
        assert!(report.rows[0].path.len() < 200);
    }

    #[test]
    fn warm_final_run_reuses_path_run() {
        let report = run_benchmark(&tiny_config()).unwrap();
        let row = &report.rows[0];
        let entry = &row.path[row.lambda_index.unwrap()];
        assert_eq!(row.rel_err.unwrap(), entry.rel_err);
        assert_eq!(row.iterations.unwrap(), entry.iterations);
    }

    #[test]
    fn cold_final_run_restarts_at_selected_lambda() {
        let cfg = BenchConfig {
            final_run: FinalRun::Cold,
            ..tiny_config()
        };
        let row = run_benchmark(&cfg).unwrap().rows.remove(0);
        assert!(row.failures.is_empty());
        assert_eq!(row.lambda, Some(row.path[row.lambda_index.unwrap()].lambda));
        assert!(row.rel_err.unwrap() >= 0.0);
    }

    #[test]
    fn relative_error_of_zero_signal() {
        let z = DVector::zeros(3);
        assert_eq!(relative_error(&DVector::from_element(3, 2.0), &z), 12f64.sqrt());
        assert_eq!(relative_error(&z, &DVector::from_element(3, 1.0)), 1.0);
    }
}
