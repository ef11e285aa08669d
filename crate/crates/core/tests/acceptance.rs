//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! reports a line even when an earlier one fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use l0forge::bench::{
    generate_instance, run_benchmark, BenchConfig, CsInstanceSpec, Ensemble, MethodSummary,
};
use l0forge::oracle::{enumerate_minimizers, prox_bruteforce, prox_objective};
use l0forge::solvers::{extrapolate_masked, NonmonotoneAverage, ObjectiveWindow};
use l0forge::{
    piht_step, solve, support_of, L0Problem, Method, QuadraticObjective, SmoothObjective, SolveOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MU: f64 = 1e-6;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `||A v||`, the Q-norm for `Q = A^T A`.
fn q_norm(obj: &QuadraticObjective, v: &DVector<f64>) -> f64 {
    obj.gram_norm(v)
}

fn tight(tol: f64, max_iters: usize) -> SolveOptions {
    SolveOptions {
        tol,
        max_iters,
        trace_level: 2,
        ..SolveOptions::default()
    }
}

/// First index after which every iterate has the terminal support.
fn stabilization_index(iterates: &[Vec<f64>]) -> usize {
    let last = support_of(&DVector::from_column_slice(iterates.last().unwrap()), 0.0);
    let mut k = iterates.len() - 1;
    while k > 0 && support_of(&DVector::from_column_slice(&iterates[k - 1]), 0.0) == last {
        k -= 1;
    }
    k
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_gap: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..1000 {
        let a = gaussian(&mut rng, 5, 8);
        let b = gaussian_vec(&mut rng, 5);
        let lambda = rng.gen_range(1e-3..=1.0);
        let obj = QuadraticObjective::new(a, b).unwrap();
        let prob = L0Problem::new(obj, lambda, MU).unwrap();
        let y = gaussian_vec(&mut rng, 8);
        let fast = piht_step(&prob, &y).unwrap();
        let brute = prox_bruteforce(&prob, &y).unwrap();
        let g = prob.smooth().gradient(&y);
        let v_fast = prox_objective(prob.smooth(), lambda, MU, &y, &g, &fast);
        let v_brute = prox_objective(prob.smooth(), lambda, MU, &y, &g, &brute);
        worst_gap = worst_gap.max(v_fast - v_brute);
        if (&fast - &brute).amax() > 1e-12 {
            mismatched += 1;
        }
    }
    let elapsed = start.elapsed();
    // a different minimizer is only acceptable as a tie, which the gap bound covers
    outcome(
        worst_gap <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("max objective gap {worst_gap:.2e}, {mismatched} tie-broken differences, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut steps = 0;
    for seed in 0..50 {
        let spec = CsInstanceSpec {
            m: 50,
            sparsity: 5,
            ..CsInstanceSpec::new(200).with_seed(100 + seed)
        };
        let inst = generate_instance(&spec).unwrap();
        let obj = QuadraticObjective::new(inst.a, inst.b).unwrap();
        let lambda = 0.01 * obj.atb().amax().powi(2);
        let prob = L0Problem::new(obj, lambda, MU).unwrap();
        let x0 = prob.smooth().atb().clone();
        let (_, rec) = solve(Method::Vmepiht, &prob, &x0, &tight(1e-8, 5000)).unwrap();
        let mut prev = prob.objective(&x0);
        for k in 0..rec.objective.len() {
            let x = DVector::from_column_slice(&rec.iterates[k]);
            let y = DVector::from_column_slice(&rec.anchors[k]);
            let lhs = rec.objective[k] + 0.5 * MU * (&x - &y).norm_squared();
            let excess = (lhs - prev) / prev.abs().max(1.0);
            worst = worst.max(excess);
            if excess > 1e-10 {
                violations += 1;
            }
            prev = rec.objective[k];
            steps += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && elapsed < Duration::from_secs(30),
        format!("{steps} iterations, {violations} violations, max relative excess {worst:.2e}, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let opts = SolveOptions {
        tol: 1e-12,
        max_iters: 200_000,
        ..SolveOptions::default()
    };
    for seed in 0..100 {
        let spec = CsInstanceSpec {
            m: 6,
            sparsity: 2,
            ..CsInstanceSpec::new(10).with_seed(seed)
        };
        let inst = generate_instance(&spec).unwrap();
        let obj = QuadraticObjective::new(inst.a, inst.b).unwrap();
        let lambda = 0.05 * obj.atb().amax().powi(2);
        let prob = L0Problem::new(obj, lambda, MU).unwrap();
        let table = enumerate_minimizers(&prob).unwrap();
        let x0 = prob.smooth().atb().clone();
        for method in Method::ALL {
            let (x, _) = solve(method, &prob, &x0, &opts).unwrap();
            let d = table.distance_to_local(&x);
            worst = worst.max(d);
            if d > 1e-6 {
                failures.push(format!("{method}@{seed}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!("500 runs, max distance {worst:.2e}, failures {failures:?}, {elapsed:.2?}"),
    )
}

/// Q-norm errors `||x_k - x_T||_Q` over the stabilized phase of a VMEPIHT run.
fn stabilized_errors(obj: &QuadraticObjective, iterates: &[Vec<f64>]) -> Vec<f64> {
    let x_t = DVector::from_column_slice(iterates.last().unwrap());
    let k0 = stabilization_index(iterates);
    iterates[k0..]
        .iter()
        .map(|x| q_norm(obj, &(DVector::from_column_slice(x) - &x_t)))
        .collect()
}

fn contraction_instance(seed: u64) -> L0Problem<QuadraticObjective> {
    let spec = CsInstanceSpec {
        m: 100,
        sparsity: 5,
        ..CsInstanceSpec::new(200).with_seed(500 + seed)
    };
    let inst = generate_instance(&spec).unwrap();
    let obj = QuadraticObjective::new(inst.a, inst.b).unwrap();
    let lambda = 0.01 * obj.atb().amax().powi(2);
    L0Problem::new(obj, lambda, MU).unwrap()
}

fn criterion_4() -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut opts = tight(1e-12, 20_000);
    opts.vmepiht.certificate_stop = false;
    for seed in 0..20 {
        let prob = contraction_instance(seed);
        let x0 = prob.smooth().atb().clone();
        let (_, rec) = solve(Method::Vmepiht, &prob, &x0, &opts).unwrap();
        let errs = stabilized_errors(prob.smooth(), &rec.iterates);
        checked += errs.len();
        if errs.windows(2).any(|w| w[1] > w[0] + 1e-9) {
            bad.push(seed);
        }
    }
    outcome(
        bad.is_empty(),
        format!("20 instances, {checked} stabilized iterates, increasing on seeds {bad:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut opts = tight(1e-10, 50_000);
    opts.vmepiht.memory = 0;
    opts.vmepiht.certificate_stop = false;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut used = 0;
    for seed in 0..20 {
        let prob = contraction_instance(seed);
        let x0 = prob.smooth().atb().clone();
        let (x, rec) = solve(Method::Vmepiht, &prob, &x0, &opts).unwrap();
        let support = support_of(&x, 0.0).nonzero_indices();
        let a_s = prob.smooth().matrix().select_columns(&support);
        let min_eig = a_s.tr_mul(&a_s).symmetric_eigenvalues().min();
        if support.is_empty() || min_eig <= 1e-10 {
            continue;
        }
        used += 1;
        let errs = stabilized_errors(prob.smooth(), &rec.iterates);
        // the terminal iterate is the reference, so its own ratio is excluded
        let ratios: Vec<f64> = errs[..errs.len() - 1]
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect();
        if ratios.is_empty() {
            continue;
        }
        let gmean = (ratios.iter().map(|r| r.max(1e-300).ln()).sum::<f64>() / ratios.len() as f64).exp();
        worst = worst.max(gmean);
        if gmean > 0.999 {
            bad.push(seed);
        }
    }
    outcome(
        bad.is_empty() && used > 0,
        format!("{used} instances, worst geometric-mean ratio {worst:.4}, failing seeds {bad:?}"),
    )
}

fn criterion_6() -> Outcome {
    let mut passed = 0;
    let mut notes = Vec::new();
    let mut opts = tight(1e-13, 10_000);
    opts.vmepiht.memory = 50;
    opts.vmepiht.certificate_stop = false;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let mut a = gaussian(&mut rng, 200, 50);
        for mut col in a.column_iter_mut() {
            let nrm = col.norm();
            col /= nrm;
        }
        let mut x_true = DVector::zeros(50);
        for i in rand::seq::index::sample(&mut rng, 50, 5) {
            x_true[i] = rng.sample::<f64, _>(StandardNormal);
        }
        let noise = gaussian_vec(&mut rng, 200) * 0.02_f64.sqrt();
        let b = &a * &x_true + noise;
        let obj = QuadraticObjective::new(a, b).unwrap();
        let lambda = 0.01 * obj.atb().amax().powi(2);
        let prob = L0Problem::new(obj, lambda, MU).unwrap();
        let x0 = prob.smooth().atb().clone();
        let (x_t, rec) = solve(Method::Vmepiht, &prob, &x0, &opts).unwrap();
        let errs: Vec<f64> = rec
            .iterates
            .iter()
            .map(|x| (DVector::from_column_slice(x) - &x_t).norm())
            .collect();
        let ratios: Vec<f64> = errs[..errs.len() - 1]
            .windows(2)
            .take_while(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect();
        let ok = ratios.len() >= 3 && {
            let r = &ratios[ratios.len() - 3..];
            r[0] > r[1] && r[1] > r[2] && r[2] < 0.1
        };
        if ok {
            passed += 1;
        } else {
            let tail: Vec<String> = ratios.iter().rev().take(3).rev().map(|r| format!("{r:.2e}")).collect();
            notes.push(format!("seed {seed}: {tail:?}"));
        }
    }
    outcome(passed >= 18, format!("{passed}/20 seeds superlinear; misses {notes:?}"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = BenchConfig::desk();
    let report = run_benchmark(&cfg).unwrap();
    let elapsed = start.elapsed();
    let summaries: Vec<&MethodSummary> = report.summaries.iter().collect();
    let get = |m: Method| summaries.iter().find(|s| s.method == m).unwrap();

    let support_ok = summaries.iter().all(|s| s.support_match_rate >= 0.9);
    let errs: Vec<f64> = summaries.iter().map(|s| s.median_rel_err).collect();
    let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    let vm = get(Method::Vmepiht).median_iterations;
    let fastest = Method::ALL[1..].iter().all(|&m| vm < get(m).median_iterations);

    let per_method: Vec<String> = summaries
        .iter()
        .map(|s| {
            format!(
                "{}: match {:.0}% iters {} err {:.4}",
                s.method,
                100.0 * s.support_match_rate,
                s.median_iterations,
                s.median_rel_err
            )
        })
        .collect();
    println!("    (a) support recovery >= 90%: {}", pass_word(support_ok));
    println!("    (b) relative-error spread {spread:.2e} <= 0.10: {}", pass_word(spread <= 0.10));
    println!("    (c) vmepiht median iterations strictly smallest: {}", pass_word(fastest));
    println!("    {}", per_method.join("; "));
    outcome(
        support_ok && spread <= 0.10 && fastest && elapsed < Duration::from_secs(600),
        format!("{} seeds, {elapsed:.2?}", cfg.seeds),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut avg = NonmonotoneAverage::new(0.1, 10.0);
    avg.update(8.0);
    let nm = (avg.q - 1.1).abs() <= 1e-15 && (avg.c - 9.0 / 1.1).abs() <= 1e-14;

    let mut w = ObjectiveWindow::new(2);
    let mut window = true;
    for (v, expect) in [(5.0, 5.0), (7.0, 7.0), (6.0, 7.0), (1.0, 7.0), (2.0, 6.0), (0.5, 2.0)] {
        w.push(v);
        window &= w.max() == expect;
    }

    let x = DVector::from_row_slice(&[0.0, 2.0, 0.0, -1.0]);
    let prev = DVector::from_row_slice(&[3.0, 1.0, -4.0, -2.0]);
    let y = extrapolate_masked(&x, &prev, 0.9999);
    let mask = y[0] == 0.0 && y[2] == 0.0 && y[1] == 2.0 + 0.9999 && y[3] == -1.0 + 0.9999;

    let elapsed = start.elapsed();
    outcome(
        nm && window && mask && elapsed < Duration::from_secs(1),
        format!("nmapg {nm}, niapg window {window}, npiht mask {mask}"),
    )
}

fn strip_time_column(csv: &str) -> String {
    let header = csv.lines().next().unwrap_or("");
    let col = header.split(',').position(|h| h == "time_s").expect("time column");
    csv.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.remove(col);
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_9() -> Outcome {
    let cfg = BenchConfig {
        sizes: vec![256],
        ensembles: vec![Ensemble::Gaussian, Ensemble::Bernoulli],
        seeds: 3,
        threads: Some(1),
        ..BenchConfig::desk()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let first = run_benchmark(&cfg).unwrap();
    l0forge::bench::write_report(&first, dir_a.path()).unwrap();
    let second = run_benchmark(&BenchConfig {
        threads: Some(3),
        ..cfg.clone()
    })
    .unwrap();
    l0forge::bench::write_report(&second, dir_b.path()).unwrap();
    let csv_a = std::fs::read_to_string(dir_a.path().join("report.csv")).unwrap();
    let csv_b = std::fs::read_to_string(dir_b.path().join("report.csv")).unwrap();
    let same = strip_time_column(&csv_a) == strip_time_column(&csv_b);
    outcome(
        same && csv_a.lines().count() == 1 + 2 * 3 * 5,
        format!("{} rows, identical modulo time_s: {same}", csv_a.lines().count() - 1),
    )
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("prox step matches brute-force prox", criterion_1),
        ("sufficient decrease at every iteration", criterion_2),
        ("solvers stop at enumerated local minimizers", criterion_3),
        ("Q-norm error non-increasing after support settles", criterion_4),
        ("linear rate with identity metric", criterion_5),
        ("superlinear tail with full memory", criterion_6),
        ("desk-scale compressive-sensing comparison", criterion_7),
        ("baseline recurrences", criterion_8),
        ("deterministic benchmark CSV", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id) {
            continue;
        }
        let res = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !res.passed {
            failed += 1;
        }
        println!("criterion {id} {}: {name} ({})", pass_word(res.passed), res.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
