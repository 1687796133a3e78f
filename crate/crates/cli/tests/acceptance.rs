//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use ndpcast::experiment::gdp_coefficients;
use ndpcast::ols_baseline::fit_ols_with_intercept;
use ndpcast::panel_data::Observation;
use ndpcast::td_learning::td_step_network_ordered;
use ndpcast::{
    evaluate, fit_ols, generate_synthetic_panel, init_network, inverse_regularize, network_eval,
    network_gradients, run_experiment, solve_finite_mrp, td_step_linear, td_step_network, train, Activation,
    Architecture, Error, FeatureKind, FeatureSpec, ForecastRule, LinearModel, ModelSpec, NetworkModel,
    PanelDataset, Quarter, Structure, SyntheticSpec, TrainConfig, Transition, ValueModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ndpcast")
}

fn ndpcast(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn ndpcast")
}

fn q(s: &str) -> Quarter {
    s.parse().unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Writes a synthetic panel CSV through the CLI.
fn synth_csv(dir: &Path, name: &str, extra: &[&str]) -> Result<PathBuf, String> {
    let path = dir.join(name);
    let mut args = vec!["synth", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = ndpcast(&args);
    ensure!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(path)
}

fn write_config(dir: &Path, data: &Path, output_dir: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{output_dir}.conf"));
    let text = format!(
        "# acceptance run\ndata = {}\noutput_dir = {}\n{extra}",
        data.display(),
        dir.join(output_dir).display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn run_config(config: &Path) -> Output {
    ndpcast(&["run", "--config", config.to_str().unwrap()])
}

fn c1_end_to_end_summary() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "panel.csv", &[])?;
    let config = write_config(dir.path(), &data, "out", "");
    let out = run_config(&config);
    ensure!(out.status.success(), "run failed: {}", String::from_utf8_lossy(&out.stderr));

    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    ensure!(lines.first() == Some(&"model,mae,rmse"), "header {:?}", lines.first());
    ensure!(lines.len() == 4, "expected 3 model rows, got {}", lines.len() - 1);
    let mut names = Vec::new();
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 3, "bad row {line}");
        let mae: f64 = f[1].parse().map_err(|e| format!("{line}: {e}"))?;
        let rmse: f64 = f[2].parse().map_err(|e| format!("{line}: {e}"))?;
        ensure!(mae.is_finite() && rmse.is_finite() && mae <= rmse, "row {line}");
        names.push(f[0].to_string());
    }
    ensure!(names == ["ols", "td_network", "td_linear"], "models {names:?}");
    for file in [
        "manifest.txt",
        "forecasts_ols.csv",
        "forecasts_td_network.csv",
        "forecasts_td_linear.csv",
        "figure1.svg",
        "figure2.svg",
    ] {
        ensure!(dir.path().join("out").join(file).is_file(), "missing {file}");
    }
    Ok(lines[1..].join(" | "))
}

struct Mrp {
    counts: Vec<Vec<usize>>,
    u: Vec<f64>,
}

fn seeded_mrp(seed: u64) -> Mrp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = (0..5)
        .map(|_| {
            let mut row = vec![0usize; 5];
            for _ in 0..20 {
                row[rng.random_range(0..5)] += 1;
            }
            row
        })
        .collect();
    let u = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
    Mrp { counts, u }
}

fn c2_tabular_convergence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        let mrp = seeded_mrp(seed);
        let p: Vec<Vec<f64>> =
            mrp.counts.iter().map(|r| r.iter().map(|&c| c as f64 / 20.0).collect()).collect();
        let g: Vec<f64> = mrp.u.iter().map(|u| u * u).collect();
        let exact = solve_finite_mrp(&p, &g, 0.9).map_err(|e| e.to_string())?;

        let one_hot = |i: usize| (0..5).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let mut transitions = Vec::new();
        for (i, row) in mrp.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    transitions.push(Transition::new("S", q("2000Q1"), one_hot(i), one_hot(j), mrp.u[i]));
                }
            }
        }
        let config = TrainConfig {
            alpha: 0.9,
            gamma0: 0.5,
            decay_tau: Some(200.0),
            epochs: 200,
            shuffle: true,
            seed,
            architecture: Architecture::Linear,
            features: FeatureKind::Raw,
            ..TrainConfig::default()
        };
        let (model, _) = train(&transitions, &config).map_err(|e| e.to_string())?;
        let ValueModel::Linear(m) = model else { return Err("linear model expected".into()) };
        let err = max_abs_diff(m.weights(), &exact);
        ensure!(err < 1e-2, "seed {seed}: max error {err}");
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("max error {worst:.2e} in {elapsed:.2?}"))
}

fn finite_difference(model: &NetworkModel, x: &[f64], eps: f64) -> Vec<f64> {
    let base = model.parameters();
    let mut probe = model.clone();
    (0..base.len())
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + eps;
            probe.set_parameters(&p).unwrap();
            let up = probe.score(x).unwrap();
            p[k] = base[k] - eps;
            probe.set_parameters(&p).unwrap();
            let down = probe.score(x).unwrap();
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let kinds = [FeatureKind::Raw, FeatureKind::RawWithBias, FeatureKind::TensorDegree2];
    let mut worst: f64 = 0.0;
    let mut filtered = 0;
    for activation in [Activation::Logistic, Activation::Relu] {
        let mut points = 0;
        while points < 50 {
            let spec = FeatureSpec::new(kinds[rng.random_range(0..3)], rng.random_range(1..7));
            let model = init_network(rng.random_range(1..10), spec, activation, rng.random())
                .map_err(|e| e.to_string())?;
            let state: Vec<f64> = (0..spec.raw_dim).map(|_| rng.random_range(0.0..1.0)).collect();
            let x = spec.encode(&state).unwrap();
            let fwd = network_eval(&model, &x).unwrap();
            if activation == Activation::Relu && fwd.preactivations.iter().any(|p| p.abs() <= 1e-3) {
                filtered += 1;
                continue;
            }
            let analytic = network_gradients(&model, &x).unwrap().flatten();
            let numeric = finite_difference(&model, &x, 1e-5);
            ensure!(analytic.len() == numeric.len(), "gradient length mismatch");
            let err = max_abs_diff(&analytic, &numeric);
            ensure!(err < 1e-6, "{activation} point {points}: error {err}");
            worst = worst.max(err);
            points += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("100 points, max error {worst:.2e}, {filtered} ReLU draws filtered, {elapsed:.2?}"))
}

fn c4_listing_arithmetic() -> Outcome {
    let raw1 = FeatureSpec::new(FeatureKind::Raw, 1);

    let linear = LinearModel::new(vec![1.0], raw1).unwrap();
    let tr = Transition::new("X", q("2000Q1"), vec![1.0], vec![1.0], 0.5);
    ensure!(tr.g == 0.25, "g = {}", tr.g);
    let (next, delta) = td_step_linear(&linear, &tr, 0.5, 0.1).map_err(|e| e.to_string())?;
    ensure!(delta == 0.25, "linear delta {delta}");
    ensure!(next.weights() == [0.975], "linear weights {:?}", next.weights());

    let net = NetworkModel::new(vec![vec![1.0]], vec![2.0], Activation::Relu, raw1).unwrap();
    let tr = Transition::new("X", q("2000Q1"), vec![1.0], vec![0.0], 0.0);
    ensure!(net.score(&[1.0]).unwrap() == 2.0 && net.score(&[0.0]).unwrap() == 0.0, "scores");
    let (next, delta) = td_step_network(&net, &tr, 0.9, 0.1).map_err(|e| e.to_string())?;
    ensure!(delta == 2.0, "network delta {delta}");
    ensure!(next.output_weights() == [1.8], "output {:?}", next.output_weights());
    ensure!(next.hidden_weights() == [0.6], "hidden {:?}", next.hidden_weights());

    let (strict, _) = td_step_network_ordered(&net, &tr, 0.9, 0.1, true).map_err(|e| e.to_string())?;
    ensure!(strict.output_weights() == [1.8], "strict output {:?}", strict.output_weights());
    Ok("delta 0.25 -> r 0.975; delta 2 -> r_1 1.8, r_11 0.6".into())
}

fn c5_ols_oracle() -> Outcome {
    let spec =
        SyntheticSpec { countries: 3, structure: Structure::Linear, noise: 0.0, ..SyntheticSpec::default() };
    let data = generate_synthetic_panel(&spec).map_err(|e| e.to_string())?;
    let pt = data.country("PT").ok_or("PT missing")?;
    let states: Vec<Vec<f64>> = pt.rows.iter().map(|r| r.indicators.clone()).collect();
    let y: Vec<f64> = pt.rows.iter().map(|r| r.target).collect();
    let model = fit_ols_with_intercept(&states, &y, data.indicators()).map_err(|e| e.to_string())?;
    let coef_err = max_abs_diff(&model.coefficients, &gdp_coefficients(spec.indicators));
    ensure!(coef_err < 1e-8, "coefficient error {coef_err}");

    let outcome = run_experiment(&data, "PT", &[], q("2014Q4")).map_err(|e| e.to_string())?;
    let mae = outcome.reports[0].mae;
    ensure!(mae < 1e-6, "OOS MAE {mae}");

    let rows: Vec<Vec<f64>> = states.iter().map(|s| vec![1.0, s[0], s[1], s[1]]).collect();
    let terms = ["(intercept)", "industry", "construction", "construction_copy"].map(String::from);
    match fit_ols(&rows, &y, &terms) {
        Err(Error::RankDeficient { index: 3, name }) if name == "construction_copy" => {}
        other => return Err(format!("expected rank deficiency on column 3, got {other:?}")),
    }
    Ok(format!("coefficient error {coef_err:.1e}, OOS MAE {mae:.1e}, duplicate column rejected"))
}

fn c6_protocol_shape() -> Outcome {
    let data = generate_synthetic_panel(&SyntheticSpec::default()).map_err(|e| e.to_string())?;
    ensure!(data.countries().len() == 27, "countries {}", data.countries().len());
    let models = vec![ModelSpec {
        name: "td_linear".into(),
        train: TrainConfig { epochs: 2, ..TrainConfig::linear() },
        rule: ForecastRule::DirectScore,
    }];
    let outcome = run_experiment(&data, "PT", &models, q("2014Q4")).map_err(|e| e.to_string())?;
    ensure!(outcome.training_transitions == 2470, "transitions {}", outcome.training_transitions);
    ensure!(outcome.test_window.len() == 36, "window {}", outcome.test_window.len());
    ensure!(
        outcome.test_window.first() == Some(&q("2015Q1")) && outcome.test_window.last() == Some(&q("2023Q4")),
        "window bounds"
    );
    Ok("26 training countries x 95 transitions = 2470; window 2015Q1..2023Q4 = 36".into())
}

fn one_series_panel(series: &[f64]) -> PanelDataset {
    let mut quarter = q("1990Q1");
    let mut obs = Vec::new();
    for (t, v) in series.iter().enumerate() {
        for (name, value) in [("x", *v), ("GDP", t as f64)] {
            obs.push(Observation { country: "AA".into(), quarter, indicator: name.into(), value });
        }
        quarter = quarter.succ();
    }
    PanelDataset::from_observations(obs, "GDP").unwrap()
}

fn c7_regularization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(2..80);
        let scale = 10f64.powi(rng.random_range(-3..7));
        let offset = rng.random_range(-5.0..5.0) * scale;
        let mut series: Vec<f64> = (0..n).map(|_| offset + scale * rng.random_range(-1.0..1.0)).collect();
        series[n - 1] = offset + scale;
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let reg = one_series_panel(&series).regularize().map_err(|e| format!("case {case}: {e}"))?;
        let params = *reg.regularization().unwrap().get("AA", "x").unwrap();
        for (raw, row) in series.iter().zip(&reg.countries()[0].rows) {
            let v = row.indicators[0];
            ensure!(*raw != lo || v == 0.0, "case {case}: min maps to {v}");
            ensure!(*raw != hi || v == 1.0, "case {case}: max maps to {v}");
            let back = inverse_regularize(v, &params);
            let rel = (back - raw).abs() / lo.abs().max(hi.abs());
            ensure!(rel <= 1e-12, "case {case}: round trip {raw} -> {back}");
            worst = worst.max(rel);
        }

        let constant = vec![series[0]; n];
        match one_series_panel(&constant).regularize() {
            Err(Error::DegenerateSeries { country, indicator, .. })
                if country == "AA" && indicator == "x" => {}
            other => return Err(format!("case {case}: constant series accepted: {other:?}")),
        }
    }
    Ok(format!("1000 series, worst relative round trip {worst:.1e}, 1000 constant series rejected"))
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "panel.csv", &["--countries", "8", "--quarters", "60"])?;
    let cfg = "ols_cutoff = 2008Q4\nepochs = 20\n";
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let config = write_config(dir.path(), &data, name, cfg);
        let out = run_config(&config);
        ensure!(out.status.success(), "{name} run failed: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(dir.path().join(name));
    }
    let mut compared = 0;
    for file in ["summary.csv", "model_td_network.txt", "model_td_linear.txt", "forecasts_td_network.csv"] {
        let a = fs::read(outputs[0].join(file)).map_err(|e| format!("{file}: {e}"))?;
        let b = fs::read(outputs[1].join(file)).map_err(|e| format!("{file}: {e}"))?;
        ensure!(a == b, "{file} differs between runs");
        compared += 1;
    }
    Ok(format!("{compared} files byte-identical"))
}

fn c9_metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let mut quarter = q("2015Q1");
        let mut actuals = Vec::new();
        let mut forecasts = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..2.0);
            actuals.push((quarter, a));
            forecasts.push((quarter, a + rng.random_range(-0.5..0.5)));
            quarter = quarter.succ();
        }
        let report = evaluate("m", &forecasts, &actuals).map_err(|e| e.to_string())?;
        ensure!(report.rmse >= report.mae, "case {case}: RMSE {} < MAE {}", report.rmse, report.mae);
        let last = *report.cumulative_errors().last().unwrap();
        let gap = (last - report.mae * n as f64).abs();
        ensure!(gap < 1e-12, "case {case}: cumulative {last} vs MAE x n (gap {gap:e})");
    }
    Ok("1000 vectors".into())
}

fn c10_divergence_guard() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "panel.csv", &["--structure", "nonlinear"])?;
    let config = write_config(dir.path(), &data, "out", "gamma0 = 50\n");
    let out = run_config(&config);
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure!(out.status.code() == Some(2), "exit code {:?}: {stderr}", out.status.code());
    ensure!(stderr.contains("diverged"), "stderr lacks divergence report: {stderr}");
    let out_dir = dir.path().join("out");
    if out_dir.exists() {
        for entry in fs::read_dir(&out_dir).unwrap() {
            let path = entry.unwrap().path();
            let text = fs::read_to_string(&path).unwrap();
            let lower = text.to_ascii_lowercase();
            ensure!(
                !lower.contains("nan") && !lower.contains("inf"),
                "{} holds non-finite values",
                path.display()
            );
        }
    }
    Ok(stderr.trim().to_string())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("end-to-end run emits a three-row summary", c1_end_to_end_summary),
        ("tabular TD converges to the exact MRP values", c2_tabular_convergence),
        ("network gradients match finite differences", c3_gradients),
        ("single-step TD arithmetic is exact", c4_listing_arithmetic),
        ("OLS recovers a noiseless linear panel", c5_ols_oracle),
        ("protocol shape: 2470 transitions, 36-quarter window", c6_protocol_shape),
        ("regularization suite on 1000 series", c7_regularization),
        ("repeated runs are byte-identical", c8_determinism),
        ("metric identities on 1000 error vectors", c9_metric_identities),
        ("large step size stops with the divergence error", c10_divergence_guard),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
