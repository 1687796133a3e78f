//! Synthetic panels and the leave-one-country-out experiment.
//!
//! # Synthetic generator (version 1)
//!
//! Countries draw from one ChaCha8 stream seeded with `seed`, in order. For
//! country `c` with scale `a_c ~ U(50, 150)` and indicator `k`:
//!
//! ```text
//! level_k   = a_c * U(0.8, 1.2)
//! load_k    = 0.05 * level_k * U(0.5, 1.5)
//! trend_k   = level_k * U(0, 0.004)
//! f_t       = 0.8 f_{t-1} + N(0, 1)                      (f_{-1} = 0)
//! v_{k,t}   = 0.5 v_{k,t-1} + N(0, 1)                    (v_{k,-1} = 0)
//! z_{k,t}   = f_t + v_{k,t}
//! x_{k,t}   = level_k + trend_k * t + load_k * z_{k,t}
//! ```
//!
//! GDP for `structure = linear` is `b_0 + sum_k b_k x_{k,t} + noise * N(0, 1)`
//! with `b_0 = 10` and `b_k = 1 / (k + 1)` (see [`gdp_coefficients`]).
//!
//! For `structure = nonlinear` the latent factor takes a shock of `-4` at
//! `t_s = floor(0.85 T)` and `-2` at `t_s + 1`, and GDP adds
//! `0.05 a_c * (0.3 z_{0,t} z_{1,t} - max(0, -1.5 - f_t)^2)` to the linear
//! part (`z_1` is `z_0` when there is a single indicator).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forecast_eval::{
    evaluate, forecast, write_summary_csv, EvalReport, ForecastContext, ForecastRule, Predictor,
};
use crate::kv;
use crate::ols_baseline::{fit_ols_with_intercept, OlsModel};
use crate::panel_data::{
    CountryFilter, Observation, PanelDataset, Quarter, RegularizationTable, SkippedCountry,
};
use crate::plot::{line_chart, Series};
use crate::td_learning::{train, TrainConfig, TrainLog};
use crate::value_approx::{Architecture, ModelFile, ValueModel};

pub const GENERATOR_VERSION: u32 = 1;
pub const OLS_MODEL_NAME: &str = "ols";

const COUNTRY_CODES: [&str; 27] = [
    "PT", "AT", "BE", "BG", "CY", "CZ", "DE", "DK", "EE", "EL", "ES", "FI", "FR", "HR", "HU", "IE", "IT",
    "LT", "LU", "LV", "MT", "NL", "PL", "RO", "SE", "SI", "SK",
];
const INDICATOR_NAMES: [&str; 6] = ["industry", "construction", "retail", "exports", "imports", "esi"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    Linear,
    Nonlinear,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Linear => "linear",
            Structure::Nonlinear => "nonlinear",
        })
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Structure::Linear),
            "nonlinear" => Ok(Structure::Nonlinear),
            other => Err(format!("unknown structure {other:?} (expected linear or nonlinear)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub countries: usize,
    pub quarters: usize,
    pub seed: u64,
    pub indicators: usize,
    pub structure: Structure,
    pub noise: f64,
    pub start: Quarter,
    pub target: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            countries: 27,
            quarters: 96,
            seed: 42,
            indicators: 6,
            structure: Structure::Nonlinear,
            noise: 0.0,
            start: Quarter::new(2000, 1).expect("valid quarter"),
            target: "GDP".into(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.countries < 2 || self.quarters < 2 {
            return Err(Error::InvalidConfig(
                "synthetic panel needs at least 2 countries and 2 quarters".into(),
            ));
        }
        if self.indicators == 0 {
            return Err(Error::InvalidConfig("synthetic panel needs at least one indicator".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig("noise scale must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn country_codes(&self) -> Vec<String> {
        (0..self.countries)
            .map(|c| match COUNTRY_CODES.get(c) {
                Some(code) => code.to_string(),
                None => format!("C{:02}", c + 1),
            })
            .collect()
    }

    pub fn indicator_names(&self) -> Vec<String> {
        (0..self.indicators)
            .map(|k| match INDICATOR_NAMES.get(k) {
                Some(name) => name.to_string(),
                None => format!("ind{}", k + 1),
            })
            .collect()
    }
}

/// Intercept then one slope per indicator, shared by all countries.
pub fn gdp_coefficients(indicators: usize) -> Vec<f64> {
    std::iter::once(10.0).chain((0..indicators).map(|k| 1.0 / (k as f64 + 1.0))).collect()
}

/// Raw (unregularized) panel drawn from the documented generator.
pub fn generate_synthetic_panel(spec: &SyntheticSpec) -> Result<PanelDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta = gdp_coefficients(spec.indicators);
    let names = spec.indicator_names();
    let shock_at = (spec.quarters as f64 * 0.85).floor() as usize;
    let mut obs = Vec::with_capacity(spec.countries * spec.quarters * (spec.indicators + 1));

    for country in spec.country_codes() {
        let scale: f64 = rng.random_range(50.0..150.0);
        let mut level = Vec::with_capacity(spec.indicators);
        let mut load = Vec::with_capacity(spec.indicators);
        let mut trend = Vec::with_capacity(spec.indicators);
        for _ in 0..spec.indicators {
            let l = scale * rng.random_range(0.8..1.2);
            level.push(l);
            load.push(0.05 * l * rng.random_range(0.5..1.5));
            trend.push(l * rng.random_range(0.0..0.004));
        }

        let mut f = 0.0f64;
        let mut v = vec![0.0f64; spec.indicators];
        let mut quarter = spec.start;
        for t in 0..spec.quarters {
            f = 0.8 * f + rng.sample::<f64, _>(StandardNormal);
            if spec.structure == Structure::Nonlinear {
                if t == shock_at {
                    f -= 4.0;
                } else if t == shock_at + 1 {
                    f -= 2.0;
                }
            }
            let mut z = Vec::with_capacity(spec.indicators);
            let mut x = Vec::with_capacity(spec.indicators);
            for k in 0..spec.indicators {
                v[k] = 0.5 * v[k] + rng.sample::<f64, _>(StandardNormal);
                z.push(f + v[k]);
                x.push(level[k] + trend[k] * t as f64 + load[k] * z[k]);
            }
            let mut gdp = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            if spec.structure == Structure::Nonlinear {
                let z1 = z.get(1).copied().unwrap_or(z[0]);
                let drop = (-1.5 - f).max(0.0);
                gdp += 0.05 * scale * (0.3 * z[0] * z1 - drop * drop);
            }
            let eps: f64 = rng.sample(StandardNormal);
            gdp += spec.noise * eps;

            for (name, value) in names.iter().zip(&x) {
                obs.push(Observation {
                    country: country.clone(),
                    quarter,
                    indicator: name.clone(),
                    value: *value,
                });
            }
            obs.push(Observation {
                country: country.clone(),
                quarter,
                indicator: spec.target.clone(),
                value: gdp,
            });
            quarter = quarter.succ();
        }
    }
    PanelDataset::from_observations(obs, &spec.target)
}

/// One TD model to train and how to turn its scores into forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub train: TrainConfig,
    pub rule: ForecastRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub name: String,
    pub config: TrainConfig,
    pub model: ValueModel,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// OLS first, then TD models in configuration order.
    pub reports: Vec<EvalReport>,
    pub td_models: Vec<TrainedModel>,
    pub ols: OlsModel,
    pub training_transitions: usize,
    pub skipped: Vec<SkippedCountry>,
    pub ols_rows: usize,
    pub test_window: Vec<Quarter>,
    pub regularization: RegularizationTable,
}

fn fingerprint_of(spec: &ModelSpec) -> Vec<(String, String)> {
    let c = &spec.train;
    let mut fp = vec![
        ("architecture".to_string(), c.architecture.to_string()),
        ("alpha".to_string(), format!("{:?}", c.alpha)),
        ("seed".to_string(), c.seed.to_string()),
        ("features".to_string(), c.features.to_string()),
        ("rule".to_string(), spec.rule.to_string()),
        ("gamma0".to_string(), format!("{:?}", c.gamma0)),
        ("epochs".to_string(), c.epochs.to_string()),
    ];
    if c.architecture == Architecture::Network {
        fp.push(("activation".to_string(), c.activation.to_string()));
        fp.push(("hidden_width".to_string(), c.hidden_width.to_string()));
    }
    fp
}

/// Trains every TD model on all countries except `test_country`, fits OLS on
/// the test country up to `ols_cutoff`, and scores every model on the test
/// country's quarters after the cutoff.
pub fn run_experiment(
    data: &PanelDataset,
    test_country: &str,
    models: &[ModelSpec],
    ols_cutoff: Quarter,
) -> Result<ExperimentOutcome> {
    let data = if data.is_regularized() { data.clone() } else { data.clone().regularize()? };
    let test = data
        .country(test_country)
        .ok_or_else(|| Error::InvalidConfig(format!("test country {test_country} not in panel")))?;
    let (first, last) = match (test.rows.first(), test.rows.last()) {
        (Some(f), Some(l)) => (f.quarter, l.quarter),
        _ => return Err(Error::EmptyWindow),
    };
    if ols_cutoff < first {
        return Err(Error::InvalidConfig(format!(
            "OLS cutoff {ols_cutoff} precedes the first {test_country} quarter {first}"
        )));
    }
    if ols_cutoff >= last {
        return Err(Error::EmptyWindow);
    }

    let set = data.build_transitions(&CountryFilter::Exclude(vec![test_country.to_string()]))?;
    if let Some(t) = set.transitions.iter().find(|t| t.country == test_country) {
        return Err(Error::InvalidPanel(format!(
            "training transition {} leaked from the test country",
            t.quarter_i
        )));
    }
    let transitions = &set.transitions;

    // Runs are independent; join in configuration order.
    let trained: Vec<Result<(ValueModel, TrainLog)>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            models.iter().map(|m| scope.spawn(move || train(transitions, &m.train))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let mut td_models = Vec::with_capacity(models.len());
    for (spec, result) in models.iter().zip(trained) {
        let (model, log) = result?;
        td_models.push(TrainedModel { name: spec.name.clone(), config: spec.train.clone(), model, log });
    }

    let train_rows: Vec<_> = test.rows.iter().filter(|r| r.quarter <= ols_cutoff).collect();
    let states: Vec<Vec<f64>> = train_rows.iter().map(|r| r.indicators.clone()).collect();
    let y: Vec<f64> = train_rows.iter().map(|r| r.target).collect();
    let ols = fit_ols_with_intercept(&states, &y, data.indicators())?;

    let window: Vec<_> = test.rows.iter().filter(|r| r.quarter > ols_cutoff).collect();
    let actuals: Vec<(Quarter, f64)> = window.iter().map(|r| (r.quarter, r.target)).collect();
    let context_at = |q: Quarter| -> Option<ForecastContext> {
        let prev = test.row(q.pred())?;
        let prev2 = test.row(q.pred().pred())?;
        Some(ForecastContext { previous_gdp: prev.target, previous_change: prev.target - prev2.target })
    };

    let mut reports = Vec::with_capacity(models.len() + 1);
    let ols_forecasts = window
        .iter()
        .map(|r| {
            Ok((r.quarter, forecast(Predictor::Ols(&ols), &r.indicators, None, ForecastRule::DirectScore)?))
        })
        .collect::<Result<Vec<_>>>()?;
    reports.push(evaluate(OLS_MODEL_NAME, &ols_forecasts, &actuals)?.with_fingerprint(vec![
        ("architecture".into(), "ols".into()),
        ("cutoff".into(), ols_cutoff.to_string()),
        ("training_rows".into(), train_rows.len().to_string()),
    ]));
    for (spec, trained) in models.iter().zip(&td_models) {
        let predictor = Predictor::Td { model: &trained.model, alpha: spec.train.alpha };
        let fc = window
            .iter()
            .map(|r| Ok((r.quarter, forecast(predictor, &r.indicators, context_at(r.quarter), spec.rule)?)))
            .collect::<Result<Vec<_>>>()?;
        reports.push(evaluate(&spec.name, &fc, &actuals)?.with_fingerprint(fingerprint_of(spec)));
    }

    Ok(ExperimentOutcome {
        reports,
        td_models,
        ols,
        training_transitions: transitions.len(),
        skipped: set.skipped,
        ols_rows: train_rows.len(),
        test_window: actuals.iter().map(|(q, _)| *q).collect(),
        regularization: data.regularization().cloned().unwrap_or_default(),
    })
}

/// Key-value provenance record written before any model artifact.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        let mut m = Self::default();
        m.push("tool", concat!("ndpcast-core ", env!("CARGO_PKG_VERSION")));
        m.push("model_format", "ndpcast-model-v1");
        m.push("synthetic_generator", GENERATOR_VERSION);
        m
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut w = kv::Writer::new();
        w.comment("ndpcast run manifest");
        for (k, v) in &self.entries {
            w.put(k, v);
        }
        w.finish()
    }
}

/// Hex SHA-256 of `bytes`.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    f.write_all(&buf)?;
    Ok(path)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    write_file(dir, "manifest.txt", |b| {
        b.extend_from_slice(manifest.render().as_bytes());
        Ok(())
    })
}

/// Writes summary, per-model forecasts, figures, models, training logs, OLS
/// coefficients and the regularization table. Returns the written paths.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    paths.push(write_file(dir, "summary.csv", |b| write_summary_csv(&outcome.reports, b))?);
    for r in &outcome.reports {
        paths.push(write_file(dir, &format!("forecasts_{}.csv", file_stem(&r.model)), |b| {
            r.write_forecasts_csv(b)
        })?);
    }

    let labels: Vec<String> = outcome.test_window.iter().map(Quarter::to_string).collect();
    let mut fig1 = vec![Series {
        name: "actual".into(),
        values: outcome
            .reports
            .first()
            .map(|r| r.rows.iter().map(|x| x.actual).collect())
            .unwrap_or_default(),
    }];
    fig1.extend(
        outcome
            .reports
            .iter()
            .map(|r| Series { name: r.model.clone(), values: r.rows.iter().map(|x| x.forecast).collect() }),
    );
    let fig2: Vec<Series> = outcome
        .reports
        .iter()
        .map(|r| Series { name: r.model.clone(), values: r.cumulative_errors() })
        .collect();
    paths.push(write_file(dir, "figure1.svg", |b| {
        b.extend_from_slice(
            line_chart("Forecasts of the regularized GDP level", "regularized GDP", &labels, &fig1)
                .as_bytes(),
        );
        Ok(())
    })?);
    paths.push(write_file(dir, "figure2.svg", |b| {
        b.extend_from_slice(
            line_chart("Cumulative absolute out-of-sample error", "cumulative |error|", &labels, &fig2)
                .as_bytes(),
        );
        Ok(())
    })?);

    for m in &outcome.td_models {
        let stem = file_stem(&m.name);
        let file = ModelFile { seed: m.config.seed, model: m.model.clone() };
        paths.push(write_file(dir, &format!("model_{stem}.txt"), |b| {
            b.extend_from_slice(file.render().as_bytes());
            Ok(())
        })?);
        paths.push(write_file(dir, &format!("trainlog_{stem}.csv"), |b| m.log.write_csv(b))?);
    }
    paths.push(write_file(dir, "ols_coefficients.csv", |b| outcome.ols.write_csv(b))?);
    paths.push(write_file(dir, "regularization.csv", |b| outcome.regularization.write_csv(b))?);
    Ok(paths)
}
