//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion on
//! stderr (uncaptured) and fails if any criterion fails.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use mcbatch::estimators::{bm, generalized_obm, obm};
use mcbatch::harness::{run_experiment, ExperimentConfig};
use mcbatch::select::{ar_gamma, ar_sigma, lag_based_batchsize, lag_rule, ArFit};
use mcbatch::var1::spectral_radius;
use mcbatch::window::verify_window_conditions;
use mcbatch::{ChainMatrix, Estimator, LagWindow, SelectionMethod, Var1Spec, WindowKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use common::*;

type Check = (bool, String);

fn identities() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(50..=5000);
        let p = rng.random_range(1..=4);
        let chain = random_chain(&mut rng, n, p);
        let b = 2 * rng.random_range(1..=n / 8);
        let bart = generalized_obm(&chain, &LagWindow::bartlett(b).unwrap()).unwrap();
        worst = worst.max(max_rel_err(&bart.sigma, &obm(&chain, b).unwrap().sigma));
        let flat = generalized_obm(&chain, &LagWindow::flat_top(b).unwrap()).unwrap();
        let combo = obm(&chain, b).unwrap().sigma * 2.0 - obm(&chain, b / 2).unwrap().sigma;
        worst = worst.max(max_rel_err(&flat.sigma, &combo));
    }
    let elapsed = start.elapsed();
    (
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("max rel err {worst:.2e}, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn window_conditions() -> Check {
    let mut failures = Vec::new();
    for b in 2..=256usize {
        let mut windows = vec![LagWindow::bartlett(b).unwrap()];
        if b % 2 == 0 {
            windows.push(LagWindow::flat_top(b).unwrap());
        }
        for w in windows {
            let bf = b as f64;
            let sum_k: f64 = (1..=b as i64).map(|k| k as f64 * w.delta2(k)).sum();
            let sum_sq: f64 = (1..=b as i64).map(|k| w.delta2(k).powi(2)).sum();
            let (want_sq, want_c) = match w.kind() {
                WindowKind::Bartlett => (1.0 / (bf * bf), 1.0),
                _ => (8.0 / (bf * bf), 0.0),
            };
            let report = verify_window_conditions(&w).unwrap();
            let ok = report.passed
                && (sum_k - 1.0).abs() <= 1e-12
                && (sum_sq - want_sq).abs() <= 1e-15 * want_sq
                && report.sum_sq_delta2 == report.expected_sum_sq_delta2
                && report.c == want_c;
            if !ok {
                failures.push(format!("{}(b={b})", w.kind()));
            }
        }
    }
    (failures.is_empty(), format!("{} failing windows {:?}", failures.len(), failures))
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(20..=200);
        let p = rng.random_range(1..=3);
        let chain = random_chain(&mut rng, n, p);
        let b = rng.random_range(1..=n / 2);
        worst = worst.max(max_rel_err(&bm(&chain, b).unwrap().sigma, &naive_bm(&chain, b)));
        let b = rng.random_range(1..n);
        worst = worst.max(max_rel_err(&obm(&chain, b).unwrap().sigma, &naive_obm(&chain, b)));
        let kind = [WindowKind::Bartlett, WindowKind::FlatTop, WindowKind::TukeyHanning][case % 3];
        let b = 2 * rng.random_range(1..=n / 4);
        let w = LagWindow::new(kind, b).unwrap();
        worst = worst.max(max_rel_err(
            &generalized_obm(&chain, &w).unwrap().sigma,
            &naive_generalized_obm(&chain, &w),
        ));
    }
    (worst <= 1e-10, format!("max rel err {worst:.2e}"))
}

fn ar_closed_forms() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.random_range(1..=5);
        let phi = random_ar(&mut rng, m);
        let sigma2 = rng.random_range(0.5..2.0);
        let gamma = psi_autocovariances(&phi, sigma2, None);
        let series_sigma = gamma[0] + 2.0 * gamma[1..].iter().sum::<f64>();
        let series_gamma = -2.0 * gamma.iter().enumerate().map(|(k, g)| k as f64 * g).sum::<f64>();
        let fit = ArFit::from_model(&phi, sigma2).unwrap();
        let s = ar_sigma(&fit).unwrap();
        let g = ar_gamma(&fit).unwrap();
        worst = worst
            .max((s - series_sigma).abs() / series_sigma.abs())
            .max((g - series_gamma).abs() / series_gamma.abs().max(1e-300));
    }
    let fit = ArFit::from_model(&[0.5], 1.0).unwrap();
    let s = ar_sigma(&fit).unwrap();
    let g = ar_gamma(&fit).unwrap();
    let exact = (s - 4.0).abs() <= 1e-8 && (g + 16.0 / 3.0).abs() <= 1e-8;
    (
        worst <= 1e-6 && exact,
        format!("max rel err {worst:.2e}, AR(1) Σ={s}, Γ={g}"),
    )
}

fn var1_closed_forms() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut worst_resid = 0.0f64;
    for _ in 0..100 {
        let p = rng.random_range(1..=5);
        let a = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        let radius = rng.random_range(0.05..0.95);
        let phi = &a * (radius / spectral_radius(&a));
        let spec = Var1Spec::new(phi.clone()).unwrap();
        let (v, sigma, gamma) = var1_series(&phi);
        let rel = |got: &DMatrix<f64>, want: &DMatrix<f64>| (got - want).amax() / want.amax().max(1e-300);
        worst = worst
            .max(rel(&spec.v, &v))
            .max(rel(&spec.sigma_true, &sigma))
            .max(rel(&spec.gamma_true, &gamma));
        let resid = &spec.v - &phi * &spec.v * phi.transpose() - DMatrix::identity(p, p);
        worst_resid = worst_resid.max(resid.amax());
    }
    (
        worst <= 1e-8 && worst_resid <= 1e-10,
        format!("max rel err {worst:.2e}, max residual {worst_resid:.2e}"),
    )
}

fn coefficient_quality() -> Check {
    let config = ExperimentConfig {
        n_final: 1_000,
        rho_grid: vec![0.80, 0.85, 0.90],
        estimators: vec![Estimator::Bm],
        methods: vec![SelectionMethod::Ar, SelectionMethod::Np],
        ..ExperimentConfig::default()
    };
    let summary = run_experiment(&config, None).unwrap().summary;
    let mut ok = true;
    let mut detail = Vec::new();
    for rho in summary.rho.values() {
        let ar = &rho.coefficients["ar"];
        let np = &rho.coefficients["np"];
        let (ar_rmse, np_rmse) = (ar.mse.unwrap().sqrt(), np.mse.unwrap().sqrt());
        ok &= ar_rmse <= 1.1 * np_rmse;
        if (rho.rho - 0.85).abs() < 1e-12 {
            ok &= ar.relative_rmse.unwrap() <= 0.25;
        }
        detail.push(format!(
            "ρ={}: AR rel RMSE {:.3}, RMSE AR/NP {:.3}",
            rho.rho,
            ar.relative_rmse.unwrap(),
            ar_rmse / np_rmse
        ));
    }
    (ok, detail.join("; "))
}

fn mse_ordering(summary: &Value) -> Check {
    let rho = &summary["rho"]["0.9000"];
    let mut ok = true;
    let mut detail = Vec::new();
    for est in ["bm", "obm"] {
        let cells = &rho["estimators"][est];
        let mse = |m: &str| cells[m]["mean_mse"].as_f64().unwrap();
        let (ar, cube, sqrt) = (mse("ar"), mse("cuberoot"), mse("sqrt"));
        ok &= ar < cube && ar <= 1.1 * sqrt;
        detail.push(format!("{est}: ar {ar:.3}, cuberoot {cube:.3}, sqrt {sqrt:.3}"));
    }
    (ok, detail.join("; "))
}

fn coverage() -> Check {
    let config = ExperimentConfig {
        replications: 500,
        rho_grid: vec![0.85],
        estimators: vec![Estimator::Bm],
        methods: vec![SelectionMethod::Ar],
        ..ExperimentConfig::default()
    };
    let summary = run_experiment(&config, None).unwrap().summary;
    let cell = &summary.rho["0.8500"].estimators["bm"]["ar"];
    let cov = cell.coverage.unwrap();
    (
        (0.84..=0.93).contains(&cov),
        format!("coverage {cov:.3} ({}/{}, {} failures)", cell.covered, cell.evaluated, cell.failures),
    )
}

fn lag_rule_behaviour() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(909);
    let n = 100_000;
    let mut twos = 0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let chain = ChainMatrix::from_column(&x).unwrap();
        if lag_based_batchsize(&chain, false).unwrap().b == 2 {
            twos += 1;
        }
    }
    let mut rs = Vec::new();
    for _ in 0..200 {
        let mut x = Vec::with_capacity(10_000);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut state = z / (1.0f64 - 0.81).sqrt();
        for _ in 0..10_000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            state = 0.9 * state + e;
            x.push(state);
        }
        rs.push(lag_rule(&ChainMatrix::from_column(&x).unwrap()).unwrap());
    }
    rs.sort_unstable();
    let median = (rs[99] + rs[100]) as f64 / 2.0;
    let share = twos as f64 / 200.0;
    (
        share >= 0.8 && (25.0..=55.0).contains(&median),
        format!("iid b=2 share {share:.3}, AR(1) median r {median}"),
    )
}

fn throughput(replicate_time: Duration) -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(1010);
    let data: Vec<f64> = (0..5_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let chain = ChainMatrix::new(data, 1_000_000, 5).unwrap();
    let start = Instant::now();
    let est = obm(&chain, 100).unwrap();
    let obm_time = start.elapsed();
    assert_eq!(est.p(), 5);
    (
        obm_time < Duration::from_secs(1) && replicate_time < Duration::from_secs(600),
        format!(
            "obm n=1e6 p=5 {:.3}s, default replicate {:.1}s (4 workers, {} cores)",
            obm_time.as_secs_f64(),
            replicate_time.as_secs_f64(),
            std::thread::available_parallelism().map_or(1, |c| c.get())
        ),
    )
}

fn default_replicate(dir: &Path) -> (Value, Duration) {
    let config_path = dir.join("default.toml");
    std::fs::write(&config_path, "").unwrap();
    let out = dir.join("out");
    let start = Instant::now();
    mcbatch::cli::replicate(&config_path, &out, Some(4)).unwrap();
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    (serde_json::from_str(&text).unwrap(), elapsed)
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, replicate_time) = default_replicate(dir.path());

    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Check + '_>)> = vec![
        (1, "exact identities", Box::new(identities)),
        (2, "window conditions", Box::new(window_conditions)),
        (3, "oracle equivalence", Box::new(oracle_equivalence)),
        (4, "AR closed forms", Box::new(ar_closed_forms)),
        (5, "VAR(1) closed forms", Box::new(var1_closed_forms)),
        (6, "coefficient estimation quality", Box::new(coefficient_quality)),
        (7, "MSE ordering", Box::new(|| mse_ordering(&summary))),
        (8, "coverage", Box::new(coverage)),
        (9, "lag rule", Box::new(lag_rule_behaviour)),
        (10, "throughput", Box::new(move || throughput(replicate_time))),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    writeln!(err).unwrap();
    for (id, name, check) in &criteria {
        let (passed, detail) = check();
        let verdict = if passed { "PASS" } else { "FAIL" };
        writeln!(err, "criterion {id:>2} {verdict} {name}: {detail}").unwrap();
        if !passed {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
