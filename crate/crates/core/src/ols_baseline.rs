//! Ordinary least squares benchmark: regularized GDP on same-quarter
//! regularized indicators, solved through a Householder QR factorization.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

/// `|R_kk|` below this fraction of the column norm marks a dependent column.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    /// Intercept first, then one slope per indicator.
    pub coefficients: Vec<f64>,
    pub terms: Vec<String>,
    pub in_sample_rmse: f64,
    /// Ratio of the largest to the smallest `|R_kk|`.
    pub condition_estimate: f64,
}

impl OlsModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn predict(&self, state: &[f64]) -> Result<f64> {
        predict_ols(self, state)
    }

    /// Writes `term,estimate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "estimate"])?;
        for (t, b) in self.terms.iter().zip(&self.coefficients) {
            w.write_record([t.as_str(), &format!("{b:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least squares fit of `y` on the columns of `rows`. `terms` names the
/// columns; the first column is expected to be the intercept.
pub fn fit_ols(rows: &[Vec<f64>], y: &[f64], terms: &[String]) -> Result<OlsModel> {
    let n = rows.len();
    let p = terms.len();
    if p == 0 {
        return Err(Error::InvalidConfig("design has no columns".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
    }
    if n < p {
        return Err(Error::Underdetermined { rows: n, columns: p });
    }
    for row in rows {
        if row.len() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: row.len() });
        }
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("design or response contains non-finite values".into()));
    }

    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();

    let mut diag_abs = Vec::with_capacity(p);
    for k in 0..p {
        let col_norm = x.column(k).norm();
        let rkk = r[(k, k)].abs();
        if col_norm == 0.0 || rkk <= RANK_TOLERANCE * col_norm {
            return Err(Error::RankDeficient { index: k, name: terms[k].clone() });
        }
        diag_abs.push(rkk);
    }

    let qty = qr.q().transpose() * &b;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::Singular)?;

    let resid = &b - &x * &beta;
    let in_sample_rmse = (resid.norm_squared() / n as f64).sqrt();
    let max = diag_abs.iter().copied().fold(0.0, f64::max);
    let min = diag_abs.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(OlsModel {
        coefficients: beta.iter().copied().collect(),
        terms: terms.to_vec(),
        in_sample_rmse,
        condition_estimate: max / min,
    })
}

/// Fits with an intercept column prepended to each state.
pub fn fit_ols_with_intercept(states: &[Vec<f64>], y: &[f64], indicators: &[String]) -> Result<OlsModel> {
    let rows: Vec<Vec<f64>> =
        states.iter().map(|s| std::iter::once(1.0).chain(s.iter().copied()).collect()).collect();
    let terms: Vec<String> =
        std::iter::once(INTERCEPT.to_string()).chain(indicators.iter().cloned()).collect();
    fit_ols(&rows, y, &terms)
}

/// `intercept + slopes . state`.
pub fn predict_ols(model: &OlsModel, state: &[f64]) -> Result<f64> {
    let slopes = model.slopes();
    if slopes.len() != state.len() {
        return Err(Error::DimensionMismatch { expected: slopes.len(), actual: state.len() });
    }
    Ok(model.intercept() + slopes.iter().zip(state).map(|(b, s)| b * s).sum::<f64>())
}
