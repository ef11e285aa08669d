mod common;

use approx::assert_relative_eq;
use l0forge::solvers::StepRule;
use l0forge::{
    hard_threshold, local_min_certificate, solve, support_of, L0Problem, Method, QuadraticObjective, SmoothObjective,
    SolveOptions, StopReason,
};
use nalgebra::{DMatrix, DVector};

fn separable(b: &[f64], lambda: f64) -> L0Problem<QuadraticObjective> {
    let n = b.len();
    let obj = QuadraticObjective::with_lipschitz(DMatrix::identity(n, n), DVector::from_row_slice(b), 1.0).unwrap();
    L0Problem::new(obj, lambda, 1e-6).unwrap()
}

#[test]
fn separable_instance_has_closed_form_fixed_point() {
    let prob = separable(&[3.0, 0.1, -2.0], 1.0);
    let expected = hard_threshold(prob.smooth().rhs(), (2.0_f64 / (1.0 + 1e-6)).sqrt()).unwrap();
    assert_eq!(expected, DVector::from_row_slice(&[3.0, 0.0, -2.0]));
    let x0 = prob.smooth().atb().clone();
    for method in Method::ALL {
        let (x, rec) = solve(method, &prob, &x0, &SolveOptions::default()).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Converged, "{method}");
        assert_relative_eq!(x, expected, epsilon = 1e-5);
        if method == Method::Vmepiht {
            assert!(rec.iterations <= 2, "{} iterations", rec.iterations);
        }
    }
}

#[test]
fn all_methods_agree_on_random_separable_instances() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let b: Vec<f64> = common::gaussian_vector(&mut rng, 12).iter().map(|v| 2.0 * v).collect();
        let prob = separable(&b, 0.5);
        let expected = hard_threshold(prob.smooth().rhs(), prob.threshold()).unwrap();
        let x0 = prob.smooth().atb().clone();
        for method in Method::ALL {
            let (x, _) = solve(method, &prob, &x0, &SolveOptions::default()).unwrap();
            assert_eq!(support_of(&x, 0.0), support_of(&expected, 0.0), "{method}");
            assert_relative_eq!(x, expected, epsilon = 1e-4);
        }
    }
}

#[test]
fn zero_data_stops_at_origin() {
    let obj = QuadraticObjective::new(DMatrix::identity(4, 4), DVector::zeros(4)).unwrap();
    let prob = L0Problem::new(obj, 1.0, 1e-6).unwrap();
    for method in Method::ALL {
        let (x, rec) = solve(method, &prob, &DVector::zeros(4), &SolveOptions::default()).unwrap();
        assert_eq!(x, DVector::zeros(4));
        assert_eq!(rec.stop_reason, StopReason::Converged);
        // VMEPIHT checks the certificate before its first step
        let expected = if method == Method::Vmepiht { 0 } else { 1 };
        assert_eq!(rec.iterations, expected, "{method}");
    }
}

/// Least-squares minimizer on a fixed support, by SVD: the independent
/// reference for a local minimizer with that support.
fn restricted_minimizer(a: &DMatrix<f64>, b: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let z = a.select_columns(support).svd(true, true).solve(b, 1e-12).unwrap();
    let mut x = DVector::zeros(a.ncols());
    for (&i, &v) in support.iter().zip(z.iter()) {
        x[i] = v;
    }
    x
}

#[test]
fn planted_instance_ends_at_a_certified_local_minimizer() {
    let mut rng = common::rng(2024);
    let (m, n) = (10, 20);
    let mut a = common::gaussian_matrix(&mut rng, m, n);
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let mut x_true = DVector::zeros(n);
    for (i, v) in [(3, 1.5), (11, -2.0), (17, 1.0)] {
        x_true[i] = v;
    }
    let b = &a * &x_true + common::gaussian_vector(&mut rng, m) * 0.01;
    let obj = QuadraticObjective::new(a.clone(), b.clone()).unwrap();
    let anchor = obj.atb().amax().powi(2);
    let opts = SolveOptions { tol: 1e-10, max_iters: 50_000, ..SolveOptions::default() };
    // a short warm-started path; keep the point closest to the truth
    let mut x = obj.atb().clone();
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for k in 0..30 {
        let lambda = anchor * (1e-4_f64).powf(k as f64 / 29.0);
        let prob = L0Problem::new(&obj, lambda, 1e-6).unwrap();
        x = solve(Method::Vmepiht, &prob, &x, &opts).unwrap().0;
        let err = (&x - &x_true).norm() / x_true.norm();
        // ignore round-off sized gains so ties go to the larger lambda
        if best.as_ref().map_or(true, |(e, _, _)| err < *e * (1.0 - 1e-6)) {
            best = Some((err, lambda, x.clone()));
        }
    }
    let (err, lambda, _) = best.unwrap();
    assert!(err < 0.05, "relative error {err}");

    let prob = L0Problem::new(&obj, lambda, 1e-6).unwrap();
    for method in Method::ALL {
        let (x, rec) = solve(method, &prob, obj.atb(), &opts).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Converged, "{method}");
        assert!(local_min_certificate(&prob, &x, 1e-6).passed, "{method}");
        let support = support_of(&x, 0.0).nonzero_indices();
        let reference = restricted_minimizer(&a, &b, &support);
        // wider supports than rows have a whole affine set of minimizers
        assert!((&a * (&x - &reference)).norm() <= 1e-6, "{method}");
        if support.len() <= m {
            assert!((&x - &reference).norm() <= 1e-6, "{method}: {}", (&x - &reference).norm());
        }
    }
}

fn random_problem(seed: u64, frac: f64) -> L0Problem<QuadraticObjective> {
    let mut rng = common::rng(seed);
    let a = common::gaussian_matrix(&mut rng, 30, 60);
    let b = common::gaussian_vector(&mut rng, 30);
    let obj = QuadraticObjective::new(a, b).unwrap();
    let lambda = frac * obj.atb().amax().powi(2);
    L0Problem::new(obj, lambda, 1e-6).unwrap()
}

#[test]
fn piht_objective_is_monotone() {
    for seed in 0..20 {
        let prob = random_problem(seed, 0.01);
        let (_, rec) = solve(Method::Piht, &prob, prob.smooth().atb(), &SolveOptions::default()).unwrap();
        for w in rec.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs(), "{} after {}", w[1], w[0]);
        }
    }
}

#[test]
fn vmepiht_iterates_respect_invariants() {
    for seed in 0..20 {
        let prob = random_problem(100 + seed, 0.02);
        let tol = 1e-8;
        let opts = SolveOptions { tol, trace_level: 2, max_iters: 20_000, ..SolveOptions::default() };
        let (x, rec) = solve(Method::Vmepiht, &prob, prob.smooth().atb(), &opts).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Converged);
        assert!(local_min_certificate(&prob, &x, 10.0 * tol).passed, "seed {seed}");

        let gamma = prob.threshold();
        let supports: Vec<Vec<usize>> = rec
            .iterates
            .iter()
            .map(|it| {
                for v in it.iter().filter(|v| **v != 0.0) {
                    assert!(v.abs() >= gamma, "entry {v} below threshold {gamma}");
                }
                (0..it.len()).filter(|&i| it[i] != 0.0).collect()
            })
            .collect();
        // once a support has repeated for 10 iterations it stays
        let mut run = 1;
        for k in 1..supports.len() {
            if supports[k] == supports[k - 1] {
                run += 1;
            } else {
                assert!(run < 10, "seed {seed}: support changed at {k} after {run} repeats");
                run = 1;
            }
        }
    }
}

/// Logistic loss `sum log(1 + exp(-y_i <a_i, x>))`: convex but not quadratic,
/// so VMEPIHT falls back to backtracking.
struct Logistic {
    a: DMatrix<f64>,
    labels: DVector<f64>,
    lipschitz: f64,
}

impl Logistic {
    fn new(a: DMatrix<f64>, labels: DVector<f64>) -> Self {
        let lipschitz = 0.25 * common::dense_lipschitz(&a) * 1.01;
        Self { a, labels, lipschitz }
    }

    fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.a * x).component_mul(&self.labels)
    }
}

impl SmoothObjective for Logistic {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.margins(x).iter().map(|z| (-z).exp().ln_1p()).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = self.margins(x).map(|z| -1.0 / (1.0 + z.exp()));
        self.a.tr_mul(&w.component_mul(&self.labels))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

#[test]
fn vmepiht_on_logistic_loss_uses_backtracking() {
    let mut rng = common::rng(5);
    let a = common::gaussian_matrix(&mut rng, 80, 15);
    let mut w = DVector::zeros(15);
    w[0] = 2.0;
    w[4] = -1.5;
    let noise = common::gaussian_vector(&mut rng, 80) * 0.5;
    let labels = (&a * &w + noise).map(|z| if z >= 0.0 { 1.0 } else { -1.0 });
    let obj = Logistic::new(a, labels);
    let prob = L0Problem::new(obj, 0.5, 1e-6).unwrap();

    for rule in [StepRule::Auto, StepRule::Dong] {
        let mut opts = SolveOptions { tol: 1e-9, max_iters: 20_000, ..SolveOptions::default() };
        opts.vmepiht.step_rule = rule;
        let (x, rec) = solve(Method::Vmepiht, &prob, &DVector::zeros(15), &opts).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Converged);
        for win in rec.objective.windows(2) {
            assert!(win[1] <= win[0] + 1e-10 * win[0].abs());
        }
        assert!(local_min_certificate(&prob, &x, 1e-6).passed);
        assert!(x[0] > 0.0 && x[4] < 0.0, "{x}");

        // the plain proximal gradient method reaches the same point
        let (xp, _) = solve(Method::Piht, &prob, &x, &opts).unwrap();
        assert_relative_eq!(x, xp, epsilon = 1e-5);
    }
    // exact steps need the least-squares structure
    let mut opts = SolveOptions::default();
    opts.vmepiht.step_rule = StepRule::Exact;
    assert!(solve(Method::Vmepiht, &prob, &DVector::zeros(15), &opts).is_err());
}

#[test]
fn run_record_round_trips_through_json() {
    let prob = random_problem(3, 0.05);
    let opts = SolveOptions { trace_level: 1, ..SolveOptions::default() };
    let (_, rec) = solve(Method::Nmapg, &prob, prob.smooth().atb(), &opts).unwrap();
    let text = serde_json::to_string(&rec).unwrap();
    assert!(text.contains("\"stop_reason\":\"converged\""));
    let back: l0forge::RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rec);
    assert_eq!(rec.support_sizes.len(), rec.objective.len());
}
