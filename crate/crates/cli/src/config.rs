//! Run configuration: defaults, then the config file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndpcast::experiment::ModelSpec;
use ndpcast::forecast_eval::{ForecastRule, SignHeuristic};
use ndpcast::kv::Document;
use ndpcast::{Activation, Architecture, FeatureKind, Quarter, TrainConfig};

/// Every accepted key with its default (`None` when the key is required).
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("data", None, "panel CSV (country,quarter,indicator,value); relative to the config file"),
    ("target", Some("GDP"), "indicator forecast by every model"),
    ("test_country", Some("PT"), "country held out of TD training and used for evaluation"),
    ("ols_cutoff", Some("2014Q4"), "last quarter of OLS training data; later quarters form the test window"),
    ("output_dir", Some("out"), "directory receiving reports; relative to the config file"),
    ("models", Some("network,linear"), "comma-separated TD models to train (network, linear)"),
    ("alpha", Some("0.9"), "discount factor, in (0,1)"),
    ("gamma0", Some("0.1"), "initial step size"),
    ("decay_tau", Some("auto"), "step-size half-life in updates; auto = 10 x training transitions"),
    ("epochs", Some("100"), "sweeps over the training transitions"),
    ("shuffle", Some("true"), "reshuffle transitions every epoch"),
    ("seed", Some("42"), "master seed; td_network uses seed+10, td_linear seed+20"),
    ("activation", Some("relu"), "network activation (relu, logistic)"),
    ("hidden_width", Some("16"), "number of hidden nodes"),
    (
        "network_features",
        Some("tensor_degree2"),
        "network input encoding (raw, raw_with_bias, tensor_degree2)",
    ),
    ("linear_features", Some("raw_with_bias"), "linear basis functions (raw, raw_with_bias, tensor_degree2)"),
    ("forecast_rule", Some("direct_score"), "score-to-level rule (direct_score, incremental_root)"),
    ("sign_heuristic", Some("previous_change"), "incremental_root sign (previous_change, always_positive)"),
    ("strict_listing_order", Some("false"), "update hidden weights with the already-updated output weight"),
    ("log_stride", Some("10"), "keep every n-th temporal difference in the training logs"),
];

pub const NETWORK_SEED_OFFSET: u64 = 10;
pub const LINEAR_SEED_OFFSET: u64 = 20;

#[derive(Debug, Clone)]
struct Setting {
    value: String,
    origin: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub target: String,
    pub test_country: String,
    pub ols_cutoff: Quarter,
    pub output_dir: PathBuf,
    pub models: Vec<ModelSpec>,
    /// Resolved `key = value` pairs, in [`KEYS`] order.
    pub echo: Vec<(String, String)>,
}

/// Collects settings from a config file and overrides, then resolves them.
#[derive(Debug, Default)]
pub struct ConfigBuilder {
    settings: Vec<(String, Setting)>,
    base_dir: PathBuf,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        let mut b = Self { settings: Vec::new(), base_dir: PathBuf::from(".") };
        for (key, default, _) in KEYS {
            if let Some(d) = default {
                b.set(key, d, "default");
            }
        }
        b
    }

    fn set(&mut self, key: &str, value: &str, origin: &str) {
        let setting = Setting { value: value.to_string(), origin: origin.to_string() };
        match self.settings.iter_mut().find(|(k, _)| k == key) {
            Some((_, s)) => *s = setting,
            None => self.settings.push((key.to_string(), setting)),
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let name = path.display().to_string();
        let doc = Document::parse(&name, &text)?;
        let allowed: Vec<&str> = KEYS.iter().map(|(k, _, _)| *k).collect();
        doc.reject_unknown(&allowed)?;
        for e in doc.entries() {
            self.set(&e.key, &e.value, &format!("{name} line {}", e.line));
        }
        self.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(())
    }

    pub fn override_key(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            bail!("unknown key `{key}`");
        }
        self.set(key, value, &format!("--{}", key.replace('_', "-")));
        Ok(())
    }

    fn get(&self, key: &str) -> Result<&Setting> {
        self.settings
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, s)| s)
            .ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    fn parse<T>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let s = self.get(key)?;
        s.value
            .parse::<T>()
            .map_err(|e| anyhow!("{}: invalid value {:?} for `{key}`: {e}", s.origin, s.value))
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        let raw = PathBuf::from(&self.get(key)?.value);
        Ok(if raw.is_absolute() || self.base_dir.as_os_str().is_empty() {
            raw
        } else {
            self.base_dir.join(raw)
        })
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let data = self.path("data")?;
        if !data.is_file() {
            bail!("data file {} not found", data.display());
        }
        let output_dir = self.path("output_dir")?;

        let decay_tau = match self.get("decay_tau")?.value.as_str() {
            "auto" => None,
            _ => Some(self.parse::<f64>("decay_tau")?),
        };
        let rule = match self.get("forecast_rule")?.value.as_str() {
            "direct_score" => ForecastRule::DirectScore,
            "incremental_root" => {
                ForecastRule::IncrementalRoot { sign: self.parse::<SignHeuristic>("sign_heuristic")? }
            }
            other => bail!(
                "{}: unknown forecast_rule {other:?} (expected direct_score or incremental_root)",
                self.get("forecast_rule")?.origin
            ),
        };
        let seed: u64 = self.parse("seed")?;
        let base = TrainConfig {
            alpha: self.parse("alpha")?,
            gamma0: self.parse("gamma0")?,
            decay_tau,
            epochs: self.parse("epochs")?,
            shuffle: self.parse("shuffle")?,
            seed,
            architecture: Architecture::Network,
            activation: self.parse::<Activation>("activation")?,
            features: FeatureKind::TensorDegree2,
            hidden_width: self.parse("hidden_width")?,
            strict_listing_order: self.parse("strict_listing_order")?,
            log_stride: self.parse("log_stride")?,
        };

        let mut models = Vec::new();
        for name in self.get("models")?.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let arch: Architecture = name.parse().map_err(|e| {
                anyhow!("{}: {e}", self.get("models").map(|s| s.origin.clone()).unwrap_or_default())
            })?;
            if models.iter().any(|m: &ModelSpec| m.train.architecture == arch) {
                bail!("model `{name}` listed twice");
            }
            let train = match arch {
                Architecture::Network => TrainConfig {
                    architecture: arch,
                    features: self.parse("network_features")?,
                    seed: seed.wrapping_add(NETWORK_SEED_OFFSET),
                    ..base.clone()
                },
                Architecture::Linear => TrainConfig {
                    architecture: arch,
                    features: self.parse("linear_features")?,
                    seed: seed.wrapping_add(LINEAR_SEED_OFFSET),
                    ..base.clone()
                },
            };
            train.validate()?;
            models.push(ModelSpec { name: format!("td_{name}"), train, rule });
        }
        // Checked even when no TD model is requested.
        base.validate()?;

        let echo = KEYS
            .iter()
            .filter_map(|(k, _, _)| {
                self.settings.iter().find(|(key, _)| key == k).map(|(key, s)| (key.clone(), s.value.clone()))
            })
            .collect();

        Ok(RunConfig {
            data,
            target: self.get("target")?.value.clone(),
            test_country: self.get("test_country")?.value.clone(),
            ols_cutoff: self.parse("ols_cutoff")?,
            output_dir,
            models,
            echo,
        })
    }
}

pub fn keys_help() -> String {
    let mut out = String::from("Config keys (`key = value` per line, `#` comments):\n");
    for (k, d, doc) in KEYS {
        let default = d.map(|d| format!(" [default: {d}]")).unwrap_or_else(|| " [required]".into());
        out.push_str(&format!("  {k:<22}{doc}{default}\n"));
    }
    out
}
