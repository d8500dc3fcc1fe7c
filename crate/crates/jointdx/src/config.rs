//! Run configuration: a flat `key = value` document naming every training
//! and model-size setting exactly once.
//!
//! ```text
//! # comments and blank lines are ignored
//! learning_rate = 0.001
//! hidden_dim = 25
//! ```
//!
//! Every key is required and unknown keys are rejected, so a typo in a
//! hyperparameter name fails loudly instead of silently using a default.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use jointdx_core::decoder::N_PAIRS;
use jointdx_core::trainer::{ModelDims, TrainConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: key '{key}' given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("config: missing key '{0}'")]
    MissingKey(&'static str),
    #[error("config key '{key}': cannot parse '{value}'")]
    BadValue { key: &'static str, value: String },
    #[error("config: {0}")]
    Invalid(String),
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 14] = [
    "learning_rate",
    "max_epochs",
    "rho",
    "epsilon",
    "ridge_lambda",
    "dropout_rate",
    "batch_size",
    "patience",
    "seed",
    "hidden_dim",
    "static_latent",
    "rank",
    "n_splits",
    "top_n",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub static_latent: usize,
    pub rank: usize,
    pub n_splits: usize,
    pub top_n: usize,
}

impl Default for RunConfig {
    /// Training defaults with hidden size 25, static latent size 15,
    /// rank 5, five splits and top-3 alerting.
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            hidden_dim: 25,
            static_latent: 15,
            rank: 5,
            n_splits: 5,
            top_n: 3,
        }
    }
}

impl RunConfig {
    /// Model dimensions for a corpus with the given input widths.
    pub fn dims(&self, input_dim: usize, static_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            static_dim,
            hidden_dim: self.hidden_dim,
            static_latent: self.static_latent,
            rank: self.rank,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("static_latent", self.static_latent),
            ("rank", self.rank),
            ("n_splits", self.n_splits),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(1..=N_PAIRS).contains(&self.top_n) {
            return Err(ConfigError::Invalid(format!("top_n must be in 1..={N_PAIRS}")));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: [Option<String>; KEYS.len()] = Default::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
            if values[slot].is_some() {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            values[slot] = Some(value.to_string());
        }

        let mut idx = 0;
        let mut next = || -> Result<(&'static str, String), ConfigError> {
            let key = KEYS[idx];
            let v = values[idx].take().ok_or(ConfigError::MissingKey(key))?;
            idx += 1;
            Ok((key, v))
        };
        fn parse<T: FromStr>((key, value): (&'static str, String)) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue { key, value })
        }
        let train = TrainConfig {
            learning_rate: parse(next()?)?,
            max_epochs: parse(next()?)?,
            rho: parse(next()?)?,
            epsilon: parse(next()?)?,
            ridge_lambda: parse(next()?)?,
            dropout_rate: parse(next()?)?,
            batch_size: parse(next()?)?,
            patience: parse(next()?)?,
            seed: parse(next()?)?,
        };
        let cfg = RunConfig {
            train,
            hidden_dim: parse(next()?)?,
            static_latent: parse(next()?)?,
            rank: parse(next()?)?,
            n_splits: parse(next()?)?,
            top_n: parse(next()?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `(key, value)` pairs in [`KEYS`] order; values use shortest
    /// round-trip formatting.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let values = [
            t.learning_rate.to_string(),
            t.max_epochs.to_string(),
            t.rho.to_string(),
            t.epsilon.to_string(),
            t.ridge_lambda.to_string(),
            t.dropout_rate.to_string(),
            t.batch_size.to_string(),
            t.patience.to_string(),
            t.seed.to_string(),
            self.hidden_dim.to_string(),
            self.static_latent.to_string(),
            self.rank.to_string(),
            self.n_splits.to_string(),
            self.top_n.to_string(),
        ];
        KEYS.into_iter().zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}
