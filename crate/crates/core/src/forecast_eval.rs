//! Level forecasts from trained models and out-of-sample error reports.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ols_baseline::OlsModel;
use crate::panel_data::Quarter;
use crate::value_approx::ValueModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignHeuristic {
    /// Move in the direction of the last observed change (up when it was zero).
    PreviousChange,
    AlwaysPositive,
}

/// How a cost-to-go score becomes a forecast of the regularized GDP level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForecastRule {
    /// The score itself is the level forecast.
    DirectScore,
    /// `previous + sign * sqrt(max(0, (1 - alpha) * score))`: the score read
    /// as the cost of a constant squared adjustment repeated forever.
    IncrementalRoot { sign: SignHeuristic },
}

impl ForecastRule {
    pub fn name(&self) -> &'static str {
        match self {
            ForecastRule::DirectScore => "direct_score",
            ForecastRule::IncrementalRoot { .. } => "incremental_root",
        }
    }
}

impl fmt::Display for ForecastRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastRule::DirectScore => f.write_str("direct_score"),
            ForecastRule::IncrementalRoot { sign } => write!(f, "incremental_root/{sign}"),
        }
    }
}

impl fmt::Display for SignHeuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignHeuristic::PreviousChange => "previous_change",
            SignHeuristic::AlwaysPositive => "always_positive",
        })
    }
}

impl FromStr for SignHeuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "previous_change" => Ok(SignHeuristic::PreviousChange),
            "always_positive" => Ok(SignHeuristic::AlwaysPositive),
            other => {
                Err(format!("unknown sign heuristic {other:?} (expected previous_change or always_positive)"))
            }
        }
    }
}

/// Information known before the forecast quarter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastContext {
    pub previous_gdp: f64,
    pub previous_change: f64,
}

/// A fitted model able to produce level forecasts.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Td { model: &'a ValueModel, alpha: f64 },
    Ols(&'a OlsModel),
}

/// Forecast of the regularized target at a quarter from the same-quarter state.
pub fn forecast(
    predictor: Predictor<'_>,
    state: &[f64],
    context: Option<ForecastContext>,
    rule: ForecastRule,
) -> Result<f64> {
    match predictor {
        Predictor::Ols(m) => m.predict(state),
        Predictor::Td { model, alpha } => {
            let score = model.score_state(state)?;
            match rule {
                ForecastRule::DirectScore => Ok(score),
                ForecastRule::IncrementalRoot { sign } => {
                    let ctx = context.ok_or(Error::MissingContext)?;
                    let s = match sign {
                        SignHeuristic::AlwaysPositive => 1.0,
                        SignHeuristic::PreviousChange if ctx.previous_change < 0.0 => -1.0,
                        SignHeuristic::PreviousChange => 1.0,
                    };
                    Ok(ctx.previous_gdp + s * ((1.0 - alpha) * score).max(0.0).sqrt())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub quarter: Quarter,
    pub actual: f64,
    pub forecast: f64,
    pub abs_error: f64,
    pub cumulative_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub rows: Vec<ForecastRow>,
    pub mae: f64,
    pub rmse: f64,
    /// Settings that produced the forecasts, as `(key, value)` pairs.
    pub fingerprint: Vec<(String, String)>,
}

impl EvalReport {
    pub fn with_fingerprint(mut self, fingerprint: Vec<(String, String)>) -> Self {
        self.fingerprint = fingerprint;
        self
    }

    pub fn cumulative_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cumulative_abs_error).collect()
    }

    /// Writes `quarter,actual,forecast,abs_error,cumulative_abs_error`.
    pub fn write_forecasts_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quarter", "actual", "forecast", "abs_error", "cumulative_abs_error"])?;
        for r in &self.rows {
            w.write_record([
                r.quarter.to_string(),
                format!("{:?}", r.actual),
                format!("{:?}", r.forecast),
                format!("{:?}", r.abs_error),
                format!("{:?}", r.cumulative_abs_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `model,mae,rmse`, one row per report in the given order.
pub fn write_summary_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "mae", "rmse"])?;
    for r in reports {
        w.write_record([r.model.clone(), format!("{:?}", r.mae), format!("{:?}", r.rmse)])?;
    }
    w.flush()?;
    Ok(())
}

fn sorted_unique(name: &str, mut series: Vec<(Quarter, f64)>) -> Result<Vec<(Quarter, f64)>> {
    series.sort_by_key(|(q, _)| *q);
    if let Some(w) = series.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::QuarterMismatch(format!("{} listed twice in {name}", w[0].0)));
    }
    Ok(series)
}

/// MAE, RMSE and the running absolute error over matching quarters.
pub fn evaluate(model: &str, forecasts: &[(Quarter, f64)], actuals: &[(Quarter, f64)]) -> Result<EvalReport> {
    if forecasts.is_empty() || actuals.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let f = sorted_unique("forecasts", forecasts.to_vec())?;
    let a = sorted_unique("actuals", actuals.to_vec())?;
    if f.len() != a.len() {
        return Err(Error::QuarterMismatch(format!("{} forecasts for {} actuals", f.len(), a.len())));
    }

    let mut rows = Vec::with_capacity(f.len());
    let mut cumulative = 0.0;
    let mut squared = 0.0;
    for ((qf, fv), (qa, av)) in f.iter().zip(&a) {
        if qf != qa {
            return Err(Error::QuarterMismatch(format!("forecast {qf} vs actual {qa}")));
        }
        let err = fv - av;
        cumulative += err.abs();
        squared += err * err;
        rows.push(ForecastRow {
            quarter: *qf,
            actual: *av,
            forecast: *fv,
            abs_error: err.abs(),
            cumulative_abs_error: cumulative,
        });
    }
    let n = rows.len() as f64;
    Ok(EvalReport {
        model: model.to_string(),
        rows,
        mae: cumulative / n,
        rmse: (squared / n).sqrt(),
        fingerprint: Vec::new(),
    })
}
