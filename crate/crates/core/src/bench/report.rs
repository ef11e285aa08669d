use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BenchRow, Ensemble};
use crate::solvers::Method;

/// Aggregates over the successful rows of one (ensemble, n, method) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ensemble: Ensemble,
    pub n: usize,
    pub runs: usize,
    pub failures: usize,
    pub median_iterations: f64,
    pub mean_iterations: f64,
    pub median_time_s: f64,
    pub mean_time_s: f64,
    pub median_rel_err: f64,
    pub mean_rel_err: f64,
    pub support_match_rate: f64,
}

/// Median of the finite values; NaN for an empty input.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn summarize(rows: &[BenchRow]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<(Ensemble, usize, Method), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.ensemble, r.n, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((ensemble, n, method), rows)| {
            let ok: Vec<&BenchRow> = rows.iter().copied().filter(|r| !r.failed()).collect();
            let iters: Vec<f64> = ok.iter().filter_map(|r| r.iterations).map(|k| k as f64).collect();
            let times: Vec<f64> = ok.iter().filter_map(|r| r.time_s).collect();
            let errs: Vec<f64> = ok.iter().filter_map(|r| r.rel_err).collect();
            let matched = ok.iter().filter(|r| r.support_match == Some(true)).count();
            MethodSummary {
                method,
                ensemble,
                n,
                runs: rows.len(),
                failures: rows.len() - ok.len(),
                median_iterations: median(&iters),
                mean_iterations: mean(&iters),
                median_time_s: median(&times),
                mean_time_s: mean(&times),
                median_rel_err: median(&errs),
                mean_rel_err: mean(&errs),
                // failed rows count as misses
                support_match_rate: matched as f64 / rows.len().max(1) as f64,
            }
        })
        .collect()
}

fn opt<T: std::fmt::LowerExp>(v: Option<T>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub const CSV_HEADER: &str = "method,n,seed,lambda,iters,time_s,rel_err,support_match,ensemble";

/// Flat table, one line per row. Floats use the shortest exact representation
/// so identical runs give identical bytes.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            r.seed,
            opt(r.lambda),
            r.iterations.map(|k| k.to_string()).unwrap_or_default(),
            r.time_s.map(|t| format!("{t:.6}")).unwrap_or_default(),
            opt(r.rel_err),
            r.support_match.map(|b| b.to_string()).unwrap_or_default(),
            r.ensemble,
        );
    }
    out
}

/// Per-instance-family panels (iterations, CPU time, relative error against
/// the seed index), one whitespace-delimited column per method.
pub fn plot_files(rows: &[BenchRow], methods: &[Method]) -> Vec<(String, String)> {
    let mut families: BTreeMap<(Ensemble, usize), BTreeMap<usize, Vec<&BenchRow>>> = BTreeMap::new();
    for r in rows {
        families
            .entry((r.ensemble, r.n))
            .or_default()
            .entry(r.seed_index)
            .or_default()
            .push(r);
    }
    type Metric = fn(&BenchRow) -> Option<f64>;
    let panels: [(&str, Metric); 3] = [
        ("iters", |r| r.iterations.map(|k| k as f64)),
        ("time", |r| r.time_s),
        ("relerr", |r| r.rel_err),
    ];
    let mut files = Vec::new();
    for ((ensemble, n), seeds) in &families {
        for (panel, metric) in panels {
            let mut text = String::from("# seed_index");
            for m in methods {
                let _ = write!(text, " {m}");
            }
            text.push('\n');
            for (seed_index, rs) in seeds {
                let _ = write!(text, "{seed_index}");
                for m in methods {
                    let v = rs.iter().find(|r| r.method == *m).and_then(|r| metric(r));
                    match v {
                        Some(v) => {
                            let _ = write!(text, " {v:e}");
                        }
                        None => text.push_str(" nan"),
                    }
                }
                text.push('\n');
            }
            files.push((format!("{ensemble}_n{n}_{panel}.dat"), text));
        }
    }
    files
}
