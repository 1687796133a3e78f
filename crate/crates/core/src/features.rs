//! Feature encodings of a raw regularized state.
//!
//! The tensor encoding lists every monomial of degree at most two over the
//! bias-augmented state `z = [1, s_1, ..., s_q0]` as `z_a * z_b` for `a <= b`,
//! in row-major upper-triangular order. Bias comes first, then the linear
//! terms in indicator order, then the quadratic terms.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Raw,
    RawWithBias,
    TensorDegree2,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Raw => "raw",
            FeatureKind::RawWithBias => "raw_with_bias",
            FeatureKind::TensorDegree2 => "tensor_degree2",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(FeatureKind::Raw),
            "raw_with_bias" => Ok(FeatureKind::RawWithBias),
            "tensor_degree2" => Ok(FeatureKind::TensorDegree2),
            other => {
                Err(format!("unknown feature kind {other:?} (expected raw, raw_with_bias or tensor_degree2)"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub raw_dim: usize,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind, raw_dim: usize) -> Self {
        Self { kind, raw_dim }
    }

    /// Length of the encoded vector.
    pub fn dim(&self) -> usize {
        let q0 = self.raw_dim;
        match self.kind {
            FeatureKind::Raw => q0,
            FeatureKind::RawWithBias => q0 + 1,
            FeatureKind::TensorDegree2 => (q0 + 1) * (q0 + 2) / 2,
        }
    }

    pub fn encode(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(state, &mut out)?;
        Ok(out)
    }

    /// Clears `out` and writes the encoding of `state` into it.
    pub fn encode_into(&self, state: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if state.len() != self.raw_dim {
            return Err(Error::DimensionMismatch { expected: self.raw_dim, actual: state.len() });
        }
        out.clear();
        match self.kind {
            FeatureKind::Raw => out.extend_from_slice(state),
            FeatureKind::RawWithBias => {
                out.push(1.0);
                out.extend_from_slice(state);
            }
            FeatureKind::TensorDegree2 => {
                let z = |k: usize| if k == 0 { 1.0 } else { state[k - 1] };
                for a in 0..=self.raw_dim {
                    for b in a..=self.raw_dim {
                        out.push(z(a) * z(b));
                    }
                }
            }
        }
        Ok(())
    }

    /// Human-readable term names in encoding order.
    pub fn term_names(&self, indicators: &[String]) -> Vec<String> {
        let name = |k: usize| {
            if k == 0 {
                "1".to_string()
            } else {
                indicators.get(k - 1).cloned().unwrap_or_else(|| format!("s{k}"))
            }
        };
        match self.kind {
            FeatureKind::Raw => (1..=self.raw_dim).map(name).collect(),
            FeatureKind::RawWithBias => (0..=self.raw_dim).map(name).collect(),
            FeatureKind::TensorDegree2 => {
                let mut out = Vec::with_capacity(self.dim());
                for a in 0..=self.raw_dim {
                    for b in a..=self.raw_dim {
                        out.push(match (a, b) {
                            (0, 0) => "1".to_string(),
                            (0, b) => name(b),
                            (a, b) => format!("{}*{}", name(a), name(b)),
                        });
                    }
                }
                out
            }
        }
    }
}

pub fn encode(state: &[f64], spec: &FeatureSpec) -> Result<Vec<f64>> {
    spec.encode(state)
}
