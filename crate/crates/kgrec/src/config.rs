//! Flat key=value run configuration. Precedence: command-line overrides
//! beat the config file, the file beats built-in defaults. Unknown keys
//! and unparsable values are rejected with the offending key and line.

use std::path::{Path, PathBuf};

use crate::error::ConfigError;
use crate::model::Activation;
use crate::trainer::{TrainConfig, Variant};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub interactions_path: Option<PathBuf>,
    pub kg_path: Option<PathBuf>,
    pub alignment_path: Option<PathBuf>,
    pub delimiter: String,
    /// Iterative k-core threshold; 0 disables filtering.
    pub min_interactions: usize,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,
    pub split_seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub relation_dim: usize,
    pub hops: usize,
    pub max_fanout: usize,
    pub tau: f64,
    pub phi: f64,
    pub lambda: f64,
    pub noise_count: usize,
    pub noise_scale: f64,
    pub dropout: f64,
    pub ema_momentum: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub k: usize,
    pub head_depth: usize,
    pub activation: Activation,
    pub variant: Variant,
    pub seed: u64,
    /// Entity drop rates for the robustness experiment.
    pub drop_rates: Vec<f64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            interactions_path: None,
            kg_path: None,
            alignment_path: None,
            delimiter: "\t".into(),
            min_interactions: 0,
            train_ratio: 0.8,
            valid_ratio: 0.1,
            test_ratio: 0.1,
            split_seed: 0,
            lr: t.lr,
            batch_size: t.batch_size,
            embed_dim: t.embed_dim,
            relation_dim: t.relation_dim,
            hops: t.hops,
            max_fanout: t.max_fanout,
            tau: t.tau,
            phi: t.phi,
            lambda: t.lambda,
            noise_count: t.noise_count,
            noise_scale: t.noise_scale,
            dropout: t.dropout,
            ema_momentum: t.ema_momentum,
            patience: t.patience,
            max_epochs: t.max_epochs,
            k: t.top_k,
            head_depth: t.head_depth,
            activation: t.activation,
            variant: t.variant,
            seed: t.seed,
            drop_rates: vec![0.0, 0.1, 0.2, 0.3],
            threads: 1,
        }
    }
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    line: Option<usize>,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::TypeMismatch {
        key: key.to_string(),
        value: value.to_string(),
        line,
    })
}

impl RunConfig {
    /// Apply one key=value assignment.
    pub fn set(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let mismatch = || ConfigError::TypeMismatch {
            key: key.to_string(),
            value: value.to_string(),
            line,
        };
        match key {
            "interactions_path" => self.interactions_path = Some(PathBuf::from(value)),
            "kg_path" => self.kg_path = Some(PathBuf::from(value)),
            "alignment_path" => self.alignment_path = Some(PathBuf::from(value)),
            "delimiter" => {
                self.delimiter = match value {
                    "tab" => "\t".to_string(),
                    "comma" => ",".to_string(),
                    "space" => " ".to_string(),
                    other => other.to_string(),
                }
            }
            "min_interactions" => self.min_interactions = parse_as(key, value, line)?,
            "train_ratio" => self.train_ratio = parse_as(key, value, line)?,
            "valid_ratio" => self.valid_ratio = parse_as(key, value, line)?,
            "test_ratio" => self.test_ratio = parse_as(key, value, line)?,
            "split_seed" => self.split_seed = parse_as(key, value, line)?,
            "lr" => self.lr = parse_as(key, value, line)?,
            "batch_size" => self.batch_size = parse_as(key, value, line)?,
            "embed_dim" => self.embed_dim = parse_as(key, value, line)?,
            "relation_dim" => self.relation_dim = parse_as(key, value, line)?,
            "hops" => self.hops = parse_as(key, value, line)?,
            "max_fanout" => self.max_fanout = parse_as(key, value, line)?,
            "tau" => self.tau = parse_as(key, value, line)?,
            "phi" => self.phi = parse_as(key, value, line)?,
            "lambda" => self.lambda = parse_as(key, value, line)?,
            "noise_count" => self.noise_count = parse_as(key, value, line)?,
            "noise_scale" => self.noise_scale = parse_as(key, value, line)?,
            "dropout" => self.dropout = parse_as(key, value, line)?,
            "ema_momentum" => self.ema_momentum = parse_as(key, value, line)?,
            "patience" => self.patience = parse_as(key, value, line)?,
            "max_epochs" => self.max_epochs = parse_as(key, value, line)?,
            "k" => self.k = parse_as(key, value, line)?,
            "head_depth" => self.head_depth = parse_as(key, value, line)?,
            "activation" => self.activation = Activation::parse(value).ok_or_else(mismatch)?,
            "variant" => self.variant = Variant::parse(value).ok_or_else(mismatch)?,
            "seed" => self.seed = parse_as(key, value, line)?,
            "drop_rates" => {
                self.drop_rates = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| mismatch()))
                    .collect::<Result<Vec<f64>, _>>()?;
            }
            "threads" => {
                self.threads = parse_as(key, value, line)?;
                if self.threads == 0 {
                    return Err(mismatch());
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Parse a config file: one `key = value` per line, `#` comments and
    /// blank lines allowed.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Malformed {
                line,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim(), Some(line))?;
        }
        Ok(())
    }

    /// Apply `key=value` strings from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: 0,
                text: o.clone(),
            })?;
            self.set(key.trim(), value.trim(), None)?;
        }
        Ok(())
    }

    /// Defaults, then file (if any), then overrides.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn resolved_text(&self) -> String {
        let path = |p: &Option<PathBuf>| -> String {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        let delim = match self.delimiter.as_str() {
            "\t" => "tab".to_string(),
            "," => "comma".to_string(),
            " " => "space".to_string(),
            other => other.to_string(),
        };
        let rates = self
            .drop_rates
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("interactions_path", path(&self.interactions_path));
        kv("kg_path", path(&self.kg_path));
        kv("alignment_path", path(&self.alignment_path));
        kv("delimiter", delim);
        kv("min_interactions", self.min_interactions.to_string());
        kv("train_ratio", self.train_ratio.to_string());
        kv("valid_ratio", self.valid_ratio.to_string());
        kv("test_ratio", self.test_ratio.to_string());
        kv("split_seed", self.split_seed.to_string());
        kv("lr", self.lr.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("embed_dim", self.embed_dim.to_string());
        kv("relation_dim", self.relation_dim.to_string());
        kv("hops", self.hops.to_string());
        kv("max_fanout", self.max_fanout.to_string());
        kv("tau", self.tau.to_string());
        kv("phi", self.phi.to_string());
        kv("lambda", self.lambda.to_string());
        kv("noise_count", self.noise_count.to_string());
        kv("noise_scale", self.noise_scale.to_string());
        kv("dropout", self.dropout.to_string());
        kv("ema_momentum", self.ema_momentum.to_string());
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("k", self.k.to_string());
        kv("head_depth", self.head_depth.to_string());
        kv("activation", self.activation.name().to_string());
        kv("variant", self.variant.label().to_string());
        kv("seed", self.seed.to_string());
        kv("drop_rates", rates);
        kv("threads", self.threads.to_string());
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            embed_dim: self.embed_dim,
            relation_dim: self.relation_dim,
            hops: self.hops,
            max_fanout: self.max_fanout,
            tau: self.tau,
            phi: self.phi,
            lambda: self.lambda,
            noise_count: self.noise_count,
            noise_scale: self.noise_scale,
            dropout: self.dropout,
            ema_momentum: self.ema_momentum,
            patience: self.patience,
            max_epochs: self.max_epochs,
            top_k: self.k,
            head_depth: self.head_depth,
            activation: self.activation,
            variant: self.variant,
            seed: self.seed,
        }
    }

    /// The interactions path, required for every run mode.
    pub fn require_interactions(&self) -> Result<&Path, ConfigError> {
        match &self.interactions_path {
            Some(p) if p.exists() => Ok(p),
            Some(p) => Err(ConfigError::PathNotFound {
                key: "interactions_path".into(),
                path: p.display().to_string(),
            }),
            None => Err(ConfigError::MissingPath {
                key: "interactions_path".into(),
            }),
        }
    }
}
