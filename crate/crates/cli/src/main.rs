mod io;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use l0forge::bench::{
    generate_instance, lambda_path_with_len, run_benchmark, write_report, BenchConfig, CsInstanceSpec, Ensemble,
    NoiseScale, DEFAULT_PATH_LEN,
};
use l0forge::oracle::enumerate_minimizers;
use l0forge::solvers::StepRule;
use l0forge::{solve, L0Problem, Method, QuadraticObjective, SolveOptions, StopReason};
use log::warn;
use nalgebra::{DMatrix, DVector};
use serde_json::json;

/// Largest dimension `oracle-verify` accepts.
const ORACLE_CLI_MAX: usize = 12;
const THREADS_ENV: &str = "L0FORGE_THREADS";

#[derive(Parser)]
#[command(name = "l0forge", version, about = "l0-regularized least squares solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and print its run record as JSON.
    Solve(SolveArgs),
    /// Run the compressive-sensing benchmark and write report files.
    Bench(BenchArgs),
    /// Print the regularization path of an instance as JSON.
    Path(PathArgs),
    /// Check that a solver stops at enumerated local minimizers.
    OracleVerify(OracleArgs),
}

/// Where the least-squares data comes from. Every flag can also be given as
/// `key = value` in a config file; flags win.
#[derive(Args, Clone, Default)]
struct ProblemArgs {
    /// Flat `key = value` file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generate a compressive-sensing instance with this ensemble.
    #[arg(long = "gen")]
    generate: Option<Ensemble>,
    #[arg(long)]
    n: Option<usize>,
    /// Measurements (default n/4).
    #[arg(long)]
    m: Option<usize>,
    /// Nonzeros of the planted signal (default m/32).
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// `variance` or `std`.
    #[arg(long)]
    noise_scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Row-major CSV matrix without header.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// CSV right-hand side (one row or one column).
    #[arg(long)]
    rhs: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    method: Option<String>,
    /// Regularization weight; defaults to `lambda_frac * ||A^T b||_inf^2`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_frac: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// L-BFGS memory of VMEPIHT (0 = identity metric).
    #[arg(long)]
    memory: Option<usize>,
    /// `auto`, `exact` or `dong`.
    #[arg(long)]
    step_rule: Option<String>,
    /// 0: objective trace, 1: plus support sizes, 2: plus iterates.
    #[arg(long)]
    trace_level: Option<u8>,
    /// Include the solution vector in the output.
    #[arg(long)]
    print_x: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// `desk` or `full`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated problem sizes.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = DEFAULT_PATH_LEN)]
    len: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seeds: usize,
    #[arg(long, default_value = "vmepiht")]
    method: String,
    /// First seed; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measurements (default 3n/5, at least 1).
    #[arg(long)]
    m: Option<usize>,
    /// Nonzeros of the planted signal (default n/5, at least 1).
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    lambda_frac: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Largest accepted distance to a local minimizer.
    #[arg(long, default_value_t = 1e-6)]
    radius: f64,
}

/// Values from a flat config file, consulted when a flag is absent.
#[derive(Default)]
struct Flat(HashMap<String, String>);

impl Flat {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}: line {}: expected key = value", path.display(), i + 1))?;
            map.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key '{key}': {e}")),
        }
    }
}

struct LoadedProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    x_true: Option<DVector<f64>>,
}

fn load_problem(args: &ProblemArgs, flat: &Flat) -> Result<LoadedProblem> {
    let matrix: Option<PathBuf> = flat.pick(args.matrix.clone(), "matrix")?;
    let rhs: Option<PathBuf> = flat.pick(args.rhs.clone(), "rhs")?;
    let generate: Option<Ensemble> = flat.pick(args.generate, "gen")?;
    match (matrix, rhs, generate) {
        (Some(mp), Some(rp), None) => {
            let a = io::read_matrix(&mp)?;
            let b = io::read_vector(&rp)?;
            if a.nrows() != b.len() {
                bail!("matrix has {} rows but rhs has {} entries", a.nrows(), b.len());
            }
            Ok(LoadedProblem { a, b, x_true: None })
        }
        (None, None, Some(ensemble)) => {
            let n: usize = flat
                .pick(args.n, "n")?
                .ok_or_else(|| anyhow!("--gen needs --n"))?;
            let base = CsInstanceSpec::new(n);
            let m = flat.pick(args.m, "m")?.unwrap_or(base.m);
            let noise_scale = match flat.pick(args.noise_scale.clone(), "noise_scale")?.as_deref() {
                None | Some("variance") => NoiseScale::Variance,
                Some("std") | Some("stddev") => NoiseScale::StdDev,
                Some(other) => bail!("unknown noise scale '{other}', expected variance or std"),
            };
            let spec = CsInstanceSpec {
                n,
                m,
                sparsity: flat.pick(args.sparsity, "sparsity")?.unwrap_or(m / 32),
                ensemble,
                noise_level: flat.pick(args.noise, "noise")?.unwrap_or(base.noise_level),
                noise_scale,
                seed: flat.pick(args.seed, "seed")?.unwrap_or(0),
            };
            let inst = generate_instance(&spec)?;
            Ok(LoadedProblem {
                a: inst.a,
                b: inst.b,
                x_true: Some(inst.x_true),
            })
        }
        (None, None, None) => bail!("give either --matrix and --rhs, or --gen"),
        _ => bail!("--matrix/--rhs and --gen are mutually exclusive, and --matrix needs --rhs"),
    }
}

fn parse_method(name: &str) -> Result<Method> {
    Ok(Method::from_str(name)?)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let flat = Flat::load(args.problem.config.as_deref())?;
    let method = parse_method(&flat.pick(args.method, "method")?.unwrap_or_else(|| "vmepiht".into()))?;
    let problem = load_problem(&args.problem, &flat)?;

    let mut opts = SolveOptions::default();
    if let Some(tol) = flat.pick(args.tol, "tol")? {
        opts.tol = tol;
    }
    if let Some(k) = flat.pick(args.max_iters, "max_iters")? {
        opts.max_iters = k;
    }
    if let Some(t) = flat.pick(args.memory, "memory")? {
        opts.vmepiht.memory = t;
    }
    if let Some(level) = flat.pick(args.trace_level, "trace_level")? {
        opts.trace_level = level;
    }
    opts.vmepiht.step_rule = match flat.pick(args.step_rule, "step_rule")?.as_deref() {
        None | Some("auto") => StepRule::Auto,
        Some("exact") => StepRule::Exact,
        Some("dong") => StepRule::Dong,
        Some(other) => bail!("unknown step rule '{other}', expected auto, exact or dong"),
    };
    let mu = flat.pick(args.mu, "mu")?.unwrap_or(1e-6);

    let obj = QuadraticObjective::new(problem.a, problem.b)?;
    let anchor = obj.atb().amax().powi(2);
    let lambda = match flat.pick(args.lambda, "lambda")? {
        Some(l) => l,
        None => flat.pick(args.lambda_frac, "lambda_frac")?.unwrap_or(0.01) * anchor,
    };
    let prob = L0Problem::new(obj, lambda, mu)?;
    let x0 = prob.smooth().atb().clone();
    let (x, record) = solve(method, &prob, &x0, &opts)?;

    let mut out = serde_json::to_value(&record)?;
    let obj_out = out.as_object_mut().expect("record serializes to an object");
    obj_out.insert("lambda".into(), json!(lambda));
    obj_out.insert("mu".into(), json!(mu));
    obj_out.insert("n".into(), json!(x.len()));
    if let Some(x_true) = &problem.x_true {
        obj_out.insert(
            "rel_err".into(),
            json!(l0forge::bench::relative_error(&x, x_true)),
        );
        obj_out.insert(
            "support_match".into(),
            json!(l0forge::bench::support_matches(&x, x_true)),
        );
    }
    if args.print_x {
        obj_out.insert("x".into(), json!(x.as_slice()));
    }
    println!("{}", serde_json::to_string(&out)?);
    Ok(match record.stop_reason {
        StopReason::Converged => ExitCode::SUCCESS,
        StopReason::MaxIters => ExitCode::from(2),
    })
}

/// Worker count after applying the environment cap.
fn capped_threads(requested: Option<usize>) -> Result<Option<usize>> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let c: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
            if c == 0 {
                bail!("{THREADS_ENV} must be positive");
            }
            Some(c)
        }
        _ => None,
    };
    Ok(match (requested, cap) {
        (Some(r), Some(c)) => Some(r.min(c)),
        (r, c) => r.or(c),
    })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let mut cfg = match &args.preset {
        Some(p) => BenchConfig::preset(p)?,
        None => BenchConfig::desk(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(s) = &args.sizes {
        cfg.set("sizes", s)?;
    }
    if let Some(m) = &args.methods {
        cfg.set("methods", m)?;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k, v)?;
    }
    cfg.threads = capped_threads(cfg.threads)?;
    cfg.validate()?;

    let report = run_benchmark(&cfg)?;
    let files = write_report(&report, &args.out)
        .with_context(|| format!("cannot write reports to {}", args.out.display()))?;
    let failures: usize = report.summaries.iter().map(|s| s.failures).sum();
    if failures > 0 {
        warn!("{failures} benchmark cells failed; see report.json");
    }
    let out = json!({
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "summaries": report.summaries,
    });
    println!("{}", serde_json::to_string(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_path(args: PathArgs) -> Result<ExitCode> {
    let flat = Flat::load(args.problem.config.as_deref())?;
    let problem = load_problem(&args.problem, &flat)?;
    let path = lambda_path_with_len(&problem.a, &problem.b, args.len)?;
    println!("{}", serde_json::to_string(&path)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_verify(args: OracleArgs) -> Result<ExitCode> {
    let method = parse_method(&args.method)?;
    if args.n > ORACLE_CLI_MAX {
        bail!(
            "n = {} exceeds the oracle size limit of {ORACLE_CLI_MAX} (2^n supports are enumerated)",
            args.n
        );
    }
    if args.n == 0 {
        bail!("n must be positive");
    }
    if args.seeds == 0 {
        warn!("--seeds 0: nothing to verify");
    }
    let m = args.m.unwrap_or((3 * args.n / 5).max(1));
    let sparsity = args.sparsity.unwrap_or((args.n / 5).max(1)).min(m);
    let opts = SolveOptions {
        tol: args.tol,
        max_iters: 200_000,
        ..SolveOptions::default()
    };
    let mut verdicts = Vec::new();
    let mut all_pass = true;
    for i in 0..args.seeds {
        let seed = args.seed + i as u64;
        let spec = CsInstanceSpec {
            n: args.n,
            m,
            sparsity,
            ..CsInstanceSpec::new(args.n).with_seed(seed)
        };
        let inst = generate_instance(&spec)?;
        let obj = QuadraticObjective::new(inst.a, inst.b)?;
        let anchor = obj.atb().amax().powi(2);
        if anchor == 0.0 {
            bail!("seed {seed}: A^T b vanishes, no lambda scale");
        }
        let prob = L0Problem::new(obj, args.lambda_frac * anchor, 1e-6)?;
        let table = enumerate_minimizers(&prob)?;
        let x0 = prob.smooth().atb().clone();
        let (x, record) = solve(method, &prob, &x0, &opts)?;
        let distance = table.distance_to_local(&x);
        let pass = distance <= args.radius;
        all_pass &= pass;
        eprintln!(
            "seed {seed}: {} (distance {distance:.2e}, {} iterations)",
            if pass { "ok" } else { "FAIL" },
            record.iterations
        );
        verdicts.push(json!({
            "seed": seed,
            "pass": pass,
            "distance": distance,
            "iterations": record.iterations,
            "support": record.final_support,
        }));
    }
    let out = json!({
        "method": method,
        "n": args.n,
        "m": m,
        "sparsity": sparsity,
        "seeds": args.seeds,
        "passed": all_pass,
        "verdicts": verdicts,
    });
    println!("{}", serde_json::to_string(&out)?);
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Path(a) => cmd_path(a),
        Command::OracleVerify(a) => cmd_oracle_verify(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
