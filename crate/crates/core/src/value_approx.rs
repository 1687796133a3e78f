//! Approximate cost-to-go architectures.
//!
//! [`LinearModel`] scores a feature vector by a dot product with its weights.
//! [`NetworkModel`] is a single hidden layer without node biases:
//! `h_k = sigma(sum_l r_kl x_l)` and `score = sum_k r_k h_k`. Any bias comes
//! from the feature encoding.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpec};
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Logistic,
    Relu,
}

impl Activation {
    pub fn eval(self, xi: f64) -> f64 {
        match self {
            Activation::Logistic => {
                if xi >= 0.0 {
                    1.0 / (1.0 + (-xi).exp())
                } else {
                    let e = xi.exp();
                    e / (e + 1.0)
                }
            }
            Activation::Relu => xi.max(0.0),
        }
    }

    /// Derivative at `xi`. ReLU uses 0 at the kink.
    pub fn derivative(self, xi: f64) -> f64 {
        match self {
            Activation::Logistic => {
                let s = self.eval(xi);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if xi > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Activation::Logistic),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation {other:?} (expected relu or logistic)")),
        }
    }
}

pub fn activation_eval(kind: Activation, xi: f64) -> f64 {
    kind.eval(xi)
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub(crate) weights: Vec<f64>,
    features: FeatureSpec,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, features: FeatureSpec) -> Result<Self> {
        check_len(features.dim(), weights.len())?;
        Ok(Self { weights, features })
    }

    pub fn zeros(features: FeatureSpec) -> Self {
        Self { weights: vec![0.0; features.dim()], features }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn features(&self) -> FeatureSpec {
        self.features
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_len(self.weights.len(), x.len())?;
        Ok(dot(&self.weights, x))
    }
}

pub fn linear_eval(model: &LinearModel, x: &[f64]) -> Result<f64> {
    model.eval(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkForward {
    pub score: f64,
    pub hidden: Vec<f64>,
    pub preactivations: Vec<f64>,
}

/// Partial derivatives of the score.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    /// `d score / d r_k`, length `s`.
    pub output: Vec<f64>,
    /// `d score / d r_kl`, `s x q` row-major.
    pub hidden: Vec<f64>,
}

impl NetworkGradients {
    /// Same ordering as [`NetworkModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.output.iter().chain(&self.hidden).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// `s x q`, row-major: row `k` feeds hidden node `k`.
    pub(crate) hidden: Vec<f64>,
    pub(crate) output: Vec<f64>,
    activation: Activation,
    features: FeatureSpec,
}

impl NetworkModel {
    pub fn new(
        hidden_rows: Vec<Vec<f64>>,
        output: Vec<f64>,
        activation: Activation,
        features: FeatureSpec,
    ) -> Result<Self> {
        let q = features.dim();
        check_len(output.len(), hidden_rows.len())?;
        if output.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one hidden node".into()));
        }
        let mut hidden = Vec::with_capacity(q * output.len());
        for row in hidden_rows {
            check_len(q, row.len())?;
            hidden.extend(row);
        }
        if !hidden.iter().chain(&output).all(|w| w.is_finite()) {
            return Err(Error::InvalidConfig("network weights must be finite".into()));
        }
        Ok(Self { hidden, output, activation, features })
    }

    pub fn hidden_width(&self) -> usize {
        self.output.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn features(&self) -> FeatureSpec {
        self.features
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output
    }

    pub fn hidden_row(&self, k: usize) -> &[f64] {
        let q = self.feature_dim();
        &self.hidden[k * q..(k + 1) * q]
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.hidden
    }

    /// Output weights followed by hidden weights (row-major).
    pub fn parameters(&self) -> Vec<f64> {
        self.output.iter().chain(&self.hidden).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.output.len() + self.hidden.len(), params.len())?;
        let (out, hid) = params.split_at(self.output.len());
        self.output.copy_from_slice(out);
        self.hidden.copy_from_slice(hid);
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<NetworkForward> {
        check_len(self.feature_dim(), x.len())?;
        let q = self.feature_dim();
        let preactivations: Vec<f64> = self.hidden.chunks_exact(q).map(|row| dot(row, x)).collect();
        let hidden: Vec<f64> = preactivations.iter().map(|&p| self.activation.eval(p)).collect();
        let score = dot(&self.output, &hidden);
        Ok(NetworkForward { score, hidden, preactivations })
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval(x)?.score)
    }

    pub fn gradients(&self, x: &[f64]) -> Result<NetworkGradients> {
        let fwd = self.eval(x)?;
        Ok(self.gradients_from(&fwd, x))
    }

    pub(crate) fn gradients_from(&self, fwd: &NetworkForward, x: &[f64]) -> NetworkGradients {
        let q = x.len();
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (k, &pre) in fwd.preactivations.iter().enumerate() {
            let scale = self.output[k] * self.activation.derivative(pre);
            hidden.extend(x.iter().map(|&xl| scale * xl));
        }
        debug_assert_eq!(hidden.len(), q * self.output.len());
        NetworkGradients { output: fwd.hidden.clone(), hidden }
    }
}

pub fn network_eval(model: &NetworkModel, x: &[f64]) -> Result<NetworkForward> {
    model.eval(x)
}

pub fn network_gradients(model: &NetworkModel, x: &[f64]) -> Result<NetworkGradients> {
    model.gradients(x)
}

/// Draws every weight i.i.d. uniform on `[-1/sqrt(q), 1/sqrt(q)]`: hidden
/// weights row by row, then output weights.
pub fn init_network(
    hidden_width: usize,
    features: FeatureSpec,
    activation: Activation,
    seed: u64,
) -> Result<NetworkModel> {
    let q = features.dim();
    if hidden_width == 0 || q == 0 {
        return Err(Error::InvalidConfig(format!(
            "network needs s >= 1 and q >= 1 (got s = {hidden_width}, q = {q})"
        )));
    }
    let bound = 1.0 / (q as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden: Vec<f64> = (0..hidden_width * q).map(|_| dist.sample(&mut rng)).collect();
    let output: Vec<f64> = (0..hidden_width).map(|_| dist.sample(&mut rng)).collect();
    Ok(NetworkModel { hidden, output, activation, features })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Linear,
    Network,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Network => "network",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Architecture::Linear),
            "network" => Ok(Architecture::Network),
            other => Err(format!("unknown architecture {other:?} (expected linear or network)")),
        }
    }
}

/// A trained scoring function of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueModel {
    Linear(LinearModel),
    Network(NetworkModel),
}

impl ValueModel {
    pub fn architecture(&self) -> Architecture {
        match self {
            ValueModel::Linear(_) => Architecture::Linear,
            ValueModel::Network(_) => Architecture::Network,
        }
    }

    pub fn features(&self) -> FeatureSpec {
        match self {
            ValueModel::Linear(m) => m.features(),
            ValueModel::Network(m) => m.features(),
        }
    }

    /// Score of an already-encoded feature vector.
    pub fn score_features(&self, x: &[f64]) -> Result<f64> {
        match self {
            ValueModel::Linear(m) => m.eval(x),
            ValueModel::Network(m) => m.score(x),
        }
    }

    /// Encodes a raw state and scores it.
    pub fn score_state(&self, state: &[f64]) -> Result<f64> {
        let x = self.features().encode(state)?;
        self.score_features(&x)
    }

    pub(crate) fn weights(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            ValueModel::Linear(m) => Box::new(m.weights.iter().copied()),
            ValueModel::Network(m) => Box::new(m.output.iter().chain(&m.hidden).copied()),
        }
    }
}

const MODEL_FORMAT: &str = "ndpcast-model-v1";

/// A value model with the seed it was initialized from.
///
/// Text layout (`key = value`, one per line):
///
/// ```text
/// format = ndpcast-model-v1
/// architecture = linear | network
/// features = raw | raw_with_bias | tensor_degree2
/// raw_dim = <q0>
/// feature_dim = <q>
/// seed = <u64>
/// weights = <q floats>                  # linear only
/// activation = relu | logistic          # network only
/// hidden_width = <s>                    # network only
/// output_weights = <s floats>           # network only
/// hidden_weights.<k> = <q floats>       # network only, k = 0..s-1
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub seed: u64,
    pub model: ValueModel,
}

impl ModelFile {
    pub fn render(&self) -> String {
        let features = self.model.features();
        let mut w = kv::Writer::new();
        w.comment("ndpcast value model")
            .put("format", MODEL_FORMAT)
            .put("architecture", self.model.architecture())
            .put("features", features.kind)
            .put("raw_dim", features.raw_dim)
            .put("feature_dim", features.dim())
            .put("seed", self.seed);
        match &self.model {
            ValueModel::Linear(m) => {
                w.put_floats("weights", m.weights());
            }
            ValueModel::Network(m) => {
                w.put("activation", m.activation())
                    .put("hidden_width", m.hidden_width())
                    .put_floats("output_weights", m.output_weights());
                for k in 0..m.hidden_width() {
                    w.put_floats(&format!("hidden_weights.{k}"), m.hidden_row(k));
                }
            }
        }
        w.finish()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = kv::Document::parse("model file", text)?;
        let format: String = doc.parse_value("format")?;
        if format != MODEL_FORMAT {
            return Err(kv::format_error(
                doc.name(),
                doc.require("format")?.line,
                &format!("unsupported format {format:?}"),
            ));
        }
        let architecture: Architecture = doc.parse_value("architecture")?;
        let kind: FeatureKind = doc.parse_value("features")?;
        let raw_dim: usize = doc.parse_value("raw_dim")?;
        let features = FeatureSpec::new(kind, raw_dim);
        let feature_dim: usize = doc.parse_value("feature_dim")?;
        check_len(features.dim(), feature_dim)?;
        let seed: u64 = doc.parse_value("seed")?;

        let model = match architecture {
            Architecture::Linear => {
                doc.reject_unknown(&[
                    "format",
                    "architecture",
                    "features",
                    "raw_dim",
                    "feature_dim",
                    "seed",
                    "weights",
                ])?;
                ValueModel::Linear(LinearModel::new(doc.parse_floats("weights")?, features)?)
            }
            Architecture::Network => {
                let activation: Activation = doc.parse_value("activation")?;
                let width: usize = doc.parse_value("hidden_width")?;
                let output = doc.parse_floats("output_weights")?;
                let rows = (0..width)
                    .map(|k| doc.parse_floats(&format!("hidden_weights.{k}")))
                    .collect::<Result<Vec<_>>>()?;
                let row_keys: Vec<String> = (0..width).map(|k| format!("hidden_weights.{k}")).collect();
                let mut allowed = vec![
                    "format",
                    "architecture",
                    "features",
                    "raw_dim",
                    "feature_dim",
                    "seed",
                    "activation",
                    "hidden_width",
                    "output_weights",
                ];
                allowed.extend(row_keys.iter().map(String::as_str));
                doc.reject_unknown(&allowed)?;
                ValueModel::Network(NetworkModel::new(rows, output, activation, features)?)
            }
        };
        Ok(Self { seed, model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: FeatureKind, q0: usize) -> FeatureSpec {
        FeatureSpec::new(kind, q0)
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Logistic.eval(0.0), 0.5);
        assert_eq!(Activation::Relu.eval(-3.2), 0.0);
        assert_eq!(Activation::Relu.eval(2.5), 2.5);
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        let l = Activation::Logistic.eval(800.0);
        assert!(l <= 1.0 && l.is_finite());
        assert!(Activation::Logistic.eval(-800.0) >= 0.0);
    }

    #[test]
    fn linear_eval_examples() {
        let m = LinearModel::new(vec![1.0, 2.0, 3.0], spec(FeatureKind::Raw, 3)).unwrap();
        assert_eq!(m.eval(&[1.0, 1.0, 1.0]).unwrap(), 6.0);
        let z = LinearModel::zeros(spec(FeatureKind::Raw, 3));
        assert_eq!(z.eval(&[4.0, -2.0, 9.0]).unwrap(), 0.0);
        assert!(matches!(m.eval(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn network_eval_examples() {
        let m = NetworkModel::new(vec![vec![1.0]], vec![2.0], Activation::Relu, spec(FeatureKind::Raw, 1))
            .unwrap();
        let fwd = m.eval(&[3.0]).unwrap();
        assert_eq!(fwd.hidden, vec![3.0]);
        assert_eq!(fwd.score, 6.0);

        for act in [Activation::Relu, Activation::Logistic] {
            let zero = NetworkModel::new(vec![vec![0.0; 3]; 4], vec![0.0; 4], act, spec(FeatureKind::Raw, 3))
                .unwrap();
            assert_eq!(zero.score(&[0.3, 0.9, 0.1]).unwrap(), 0.0);
        }

        let dead = NetworkModel::new(
            vec![vec![-1.0, -2.0], vec![-0.5, -0.1]],
            vec![3.0, -4.0],
            Activation::Relu,
            spec(FeatureKind::Raw, 2),
        )
        .unwrap();
        assert_eq!(dead.score(&[0.4, 0.6]).unwrap(), 0.0);
    }

    #[test]
    fn relu_gradient_rules() {
        // Negative preactivation zeroes the whole row.
        let m = NetworkModel::new(
            vec![vec![-1.0], vec![1.0]],
            vec![5.0, 2.0],
            Activation::Relu,
            spec(FeatureKind::Raw, 1),
        )
        .unwrap();
        let g = m.gradients(&[1.0]).unwrap();
        assert_eq!(g.hidden[0], 0.0);
        assert_eq!(g.output, vec![0.0, 1.0]);

        // preactivation +1, r_k = 2, x = [0.5] -> 2 * 0.5 = 1.
        let m = NetworkModel::new(vec![vec![2.0]], vec![2.0], Activation::Relu, spec(FeatureKind::Raw, 1))
            .unwrap();
        let g = m.gradients(&[0.5]).unwrap();
        assert_eq!(m.eval(&[0.5]).unwrap().preactivations, vec![1.0]);
        assert_eq!(g.hidden, vec![1.0]);
    }

    #[test]
    fn shape_errors() {
        assert!(NetworkModel::new(
            vec![vec![1.0, 2.0]],
            vec![1.0],
            Activation::Relu,
            spec(FeatureKind::Raw, 1)
        )
        .is_err());
        assert!(NetworkModel::new(
            vec![vec![1.0]],
            vec![1.0, 2.0],
            Activation::Relu,
            spec(FeatureKind::Raw, 1)
        )
        .is_err());
        assert!(NetworkModel::new(
            vec![vec![f64::NAN]],
            vec![1.0],
            Activation::Relu,
            spec(FeatureKind::Raw, 1)
        )
        .is_err());
        let m = init_network(2, spec(FeatureKind::Raw, 3), Activation::Relu, 1).unwrap();
        assert!(m.eval(&[1.0]).is_err());
        assert!(init_network(0, spec(FeatureKind::Raw, 3), Activation::Relu, 1).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let fs = spec(FeatureKind::TensorDegree2, 6);
        let a = init_network(16, fs, Activation::Relu, 42).unwrap();
        let b = init_network(16, fs, Activation::Relu, 42).unwrap();
        let c = init_network(16, fs, Activation::Relu, 43).unwrap();
        assert_eq!(
            a.parameters().iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.parameters().iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.parameters(), c.parameters());
        let bound = 1.0 / (fs.dim() as f64).sqrt();
        assert!(a.parameters().iter().all(|w| w.abs() <= bound));
        assert_eq!(a.hidden_weights().len(), 16 * 28);
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let fs = spec(FeatureKind::TensorDegree2, 3);
        let net = init_network(5, fs, Activation::Logistic, 9).unwrap();
        let file = ModelFile { seed: 9, model: ValueModel::Network(net) };
        let text = file.render();
        let back = ModelFile::parse(&text).unwrap();
        assert_eq!(back, file);
        let state = [0.2, 0.9, 0.45];
        assert_eq!(
            back.model.score_state(&state).unwrap().to_bits(),
            file.model.score_state(&state).unwrap().to_bits()
        );
        assert_eq!(back.render(), text);

        let lin =
            LinearModel::new(vec![0.1, -1.0 / 3.0, 7e-12, 4.0], spec(FeatureKind::RawWithBias, 3)).unwrap();
        let file = ModelFile { seed: 0, model: ValueModel::Linear(lin) };
        assert_eq!(ModelFile::parse(&file.render()).unwrap(), file);
    }

    #[test]
    fn model_file_rejects_bad_input() {
        let lin = LinearModel::zeros(spec(FeatureKind::Raw, 2));
        let text = ModelFile { seed: 0, model: ValueModel::Linear(lin) }.render();
        assert!(ModelFile::parse(&text.replace("ndpcast-model-v1", "v0")).is_err());
        assert!(ModelFile::parse(&text.replace("weights = 0.0 0.0", "weights = 0.0")).is_err());
        assert!(ModelFile::parse(&format!("{text}extra = 1\n")).is_err());
    }

    proptest! {
        #[test]
        fn logistic_symmetry(xi in -50.0f64..50.0) {
            let s = Activation::Logistic.eval(xi) + Activation::Logistic.eval(-xi);
            prop_assert!((s - 1.0).abs() < 1e-15);
            let v = Activation::Logistic.eval(xi);
            prop_assert!((0.0..=1.0).contains(&v));
            // Beyond |xi| ~ 36 the value rounds to exactly 0 or 1.
            if xi.abs() < 30.0 {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }

        #[test]
        fn linear_is_additive(
            r in prop::collection::vec(-5.0f64..5.0, 4),
            x in prop::collection::vec(-5.0f64..5.0, 4),
            y in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let m = LinearModel::new(r, spec(FeatureKind::Raw, 4)).unwrap();
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = m.eval(&x).unwrap() + m.eval(&y).unwrap();
            prop_assert!((lhs - m.eval(&sum).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn score_is_output_dot_hidden(seed in 0u64..1000, x in prop::collection::vec(0.0f64..1.0, 3)) {
            let m = init_network(7, spec(FeatureKind::TensorDegree2, 3), Activation::Relu, seed).unwrap();
            let fx = spec(FeatureKind::TensorDegree2, 3).encode(&x).unwrap();
            let fwd = m.eval(&fx).unwrap();
            prop_assert_eq!(fwd.score.to_bits(), dot(m.output_weights(), &fwd.hidden).to_bits());
        }
    }
}
