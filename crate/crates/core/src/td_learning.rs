//! TD(0) training of value models over panel transitions.
//!
//! For a transition `i -> j` with cost `g` the temporal difference is
//! `delta = J(i) - alpha * J(j) - g`, evaluated at the current weights, and
//! every weight moves by `-gamma * delta * dJ(i)/dw` (semi-gradient: the
//! `J(j)` term is treated as a constant).
//!
//! Seeds: a run with seed `s` initializes network weights from `s + 1` and
//! shuffles transitions with `s + 2`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpec};
use crate::panel_data::Transition;
use crate::value_approx::{
    dot, init_network, Activation, Architecture, LinearModel, NetworkModel, ValueModel,
};

pub const INIT_SEED_OFFSET: u64 = 1;
pub const SHUFFLE_SEED_OFFSET: u64 = 2;

/// Any weight beyond this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// `gamma0 / (1 + t / decay_tau)`.
pub fn step_size(t: u64, gamma0: f64, decay_tau: f64) -> f64 {
    gamma0 / (1.0 + t as f64 / decay_tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub gamma0: f64,
    /// `None` means ten times the number of transitions.
    pub decay_tau: Option<f64>,
    pub epochs: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub architecture: Architecture,
    pub activation: Activation,
    pub features: FeatureKind,
    pub hidden_width: usize,
    /// Use the already-updated output weight when updating hidden weights.
    pub strict_listing_order: bool,
    /// Keep every n-th temporal difference in the log.
    pub log_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            gamma0: 0.1,
            decay_tau: None,
            epochs: 100,
            shuffle: true,
            seed: 42,
            architecture: Architecture::Network,
            activation: Activation::Relu,
            features: FeatureKind::TensorDegree2,
            hidden_width: 16,
            strict_listing_order: false,
            log_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn linear() -> Self {
        Self { architecture: Architecture::Linear, features: FeatureKind::RawWithBias, ..Self::default() }
    }

    pub fn network() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0,1)".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::InvalidConfig("gamma0 must be positive and finite".into()));
        }
        if let Some(tau) = self.decay_tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidConfig("decay_tau must be positive and finite".into()));
            }
        }
        if self.architecture == Architecture::Network && self.hidden_width == 0 {
            return Err(Error::InvalidConfig("hidden_width must be at least 1".into()));
        }
        if self.log_stride == 0 {
            return Err(Error::InvalidConfig("log_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_tau(&self, transitions: usize) -> f64 {
        self.decay_tau.unwrap_or(10.0 * transitions as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRecord {
    pub update: u64,
    pub epoch: usize,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub deltas: Vec<DeltaRecord>,
    pub epoch_mean_abs_delta: Vec<f64>,
    pub final_gamma: f64,
    pub updates: u64,
}

impl TrainLog {
    /// Writes `update,epoch,gamma,delta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["update", "epoch", "gamma", "delta"])?;
        for r in &self.deltas {
            w.write_record([
                r.update.to_string(),
                r.epoch.to_string(),
                format!("{:?}", r.gamma),
                format!("{:?}", r.delta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn encode_pair(spec: &FeatureSpec, tr: &Transition) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((spec.encode(&tr.x_i)?, spec.encode(&tr.x_j)?))
}

fn linear_update(weights: &mut [f64], xi: &[f64], xj: &[f64], g: f64, alpha: f64, gamma: f64) -> f64 {
    let delta = dot(weights, xi) - alpha * dot(weights, xj) - g;
    let step = gamma * delta;
    for (w, &x) in weights.iter_mut().zip(xi) {
        *w -= step * x;
    }
    delta
}

fn network_update(
    model: &mut NetworkModel,
    xi: &[f64],
    xj: &[f64],
    g: f64,
    alpha: f64,
    gamma: f64,
    strict_listing_order: bool,
) -> f64 {
    let q = xi.len();
    let fwd = model.eval(xi).expect("feature length validated by caller");
    let score_j = model.score(xj).expect("feature length validated by caller");
    let delta = fwd.score - alpha * score_j - g;
    let step = gamma * delta;
    let act = model.activation();
    for k in 0..model.output.len() {
        let r_k = model.output[k];
        model.output[k] -= step * fwd.hidden[k];
        let r_k = if strict_listing_order { model.output[k] } else { r_k };
        let scale = r_k * act.derivative(fwd.preactivations[k]);
        let row = &mut model.hidden[k * q..(k + 1) * q];
        for (w, &x) in row.iter_mut().zip(xi) {
            *w -= step * (scale * x);
        }
    }
    delta
}

/// One TD(0) update of a linear model; returns the new snapshot and `delta`.
pub fn td_step_linear(
    model: &LinearModel,
    tr: &Transition,
    alpha: f64,
    gamma: f64,
) -> Result<(LinearModel, f64)> {
    let (xi, xj) = encode_pair(&model.features(), tr)?;
    let mut next = model.clone();
    let delta = linear_update(&mut next.weights, &xi, &xj, tr.g, alpha, gamma);
    Ok((next, delta))
}

/// One TD(0) update of a network. Both scores in `delta` and the output
/// weight used for the hidden-layer step are taken before the update.
pub fn td_step_network(
    model: &NetworkModel,
    tr: &Transition,
    alpha: f64,
    gamma: f64,
) -> Result<(NetworkModel, f64)> {
    td_step_network_ordered(model, tr, alpha, gamma, false)
}

/// Like [`td_step_network`], optionally applying the hidden-layer step with
/// the freshly updated output weight.
pub fn td_step_network_ordered(
    model: &NetworkModel,
    tr: &Transition,
    alpha: f64,
    gamma: f64,
    strict_listing_order: bool,
) -> Result<(NetworkModel, f64)> {
    let (xi, xj) = encode_pair(&model.features(), tr)?;
    let mut next = model.clone();
    let delta = network_update(&mut next, &xi, &xj, tr.g, alpha, gamma, strict_listing_order);
    Ok((next, delta))
}

fn check_weights(model: &ValueModel, delta: f64) -> Option<String> {
    if !delta.is_finite() {
        return Some("non-finite temporal difference".into());
    }
    for w in model.weights() {
        if !w.is_finite() {
            return Some("non-finite weight".into());
        }
        if w.abs() > DIVERGENCE_LIMIT {
            return Some(format!("weight magnitude {w:e} exceeds {DIVERGENCE_LIMIT:e}"));
        }
    }
    None
}

/// Initial model for a config over states of dimension `raw_dim`.
pub fn initial_model(config: &TrainConfig, raw_dim: usize) -> Result<ValueModel> {
    let spec = FeatureSpec::new(config.features, raw_dim);
    Ok(match config.architecture {
        Architecture::Linear => ValueModel::Linear(LinearModel::zeros(spec)),
        Architecture::Network => ValueModel::Network(init_network(
            config.hidden_width,
            spec,
            config.activation,
            config.seed.wrapping_add(INIT_SEED_OFFSET),
        )?),
    })
}

/// Runs `config.epochs` sweeps of TD(0) over `transitions`.
pub fn train(transitions: &[Transition], config: &TrainConfig) -> Result<(ValueModel, TrainLog)> {
    config.validate()?;
    let first = transitions.first().ok_or(Error::EmptyTransitions)?;
    let raw_dim = first.x_i.len();
    let model = initial_model(config, raw_dim)?;
    train_from(model, transitions, config)
}

/// Continues training an existing model.
pub fn train_from(
    mut model: ValueModel,
    transitions: &[Transition],
    config: &TrainConfig,
) -> Result<(ValueModel, TrainLog)> {
    config.validate()?;
    if transitions.is_empty() {
        return Err(Error::EmptyTransitions);
    }
    let spec = model.features();
    let encoded: Vec<(Vec<f64>, Vec<f64>, f64)> = transitions
        .iter()
        .map(|tr| encode_pair(&spec, tr).map(|(xi, xj)| (xi, xj, tr.g)))
        .collect::<Result<_>>()?;

    let tau = config.effective_tau(transitions.len());
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut log = TrainLog { final_gamma: step_size(0, config.gamma0, tau), ..TrainLog::default() };
    let mut t: u64 = 0;

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut abs_sum = 0.0;
        for &idx in &order {
            let (xi, xj, g) = &encoded[idx];
            let gamma = step_size(t, config.gamma0, tau);
            let delta = match &mut model {
                ValueModel::Linear(m) => linear_update(&mut m.weights, xi, xj, *g, config.alpha, gamma),
                ValueModel::Network(m) => {
                    network_update(m, xi, xj, *g, config.alpha, gamma, config.strict_listing_order)
                }
            };
            if let Some(reason) = check_weights(&model, delta) {
                return Err(Error::Divergence { epoch, update: t, gamma, reason });
            }
            if t.is_multiple_of(config.log_stride as u64) {
                log.deltas.push(DeltaRecord { update: t, epoch, gamma, delta });
            }
            abs_sum += delta.abs();
            log.final_gamma = gamma;
            t += 1;
        }
        log.epoch_mean_abs_delta.push(abs_sum / encoded.len() as f64);
    }
    log.updates = t;
    Ok((model, log))
}

/// Solves `(I - alpha P) J = g` for a finite Markov reward process.
pub fn solve_finite_mrp(p: &[Vec<f64>], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidMrp("empty state space".into()));
    }
    if g.len() != n {
        return Err(Error::InvalidMrp(format!("cost vector has length {}, expected {n}", g.len())));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidMrp("alpha must lie in (0,1)".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidMrp(format!("row {i} has length {}, expected {n}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMrp(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMrp(format!("row {i} sums to {sum}")));
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMrp("non-finite cost".into()));
    }

    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - alpha * p[i][j]
    });
    let b = DVector::from_column_slice(g);
    let j = a.clone().lu().solve(&b).ok_or(Error::Singular)?;
    let residual = (&a * &j - &b).amax();
    let scale = b.amax().max(1.0);
    if residual.is_nan() || residual >= 1e-10 * scale {
        return Err(Error::Singular);
    }
    Ok(j.iter().copied().collect())
}
