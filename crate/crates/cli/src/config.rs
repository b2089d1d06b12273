//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored. Lists
//! are comma-separated. The DGP keys are
//!
//! ```text
//! kind mu_shift gamma_r gamma_o beta0 beta_x tau0 beta_u sigma p
//! cov_box y_lower y_upper
//! ```
//!
//! `kind` selects the defaults that the other keys then override, wherever it
//! appears in the file. Experiment commands accept further keys (see
//! [`EXPERIMENT_KEYS`]).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use transport_bounds::dgp::{BoundedSupport, DgpKind, DgpSpec};

pub const DGP_KEYS: &[&str] = &[
    "kind", "p", "mu_shift", "gamma_r", "gamma_o", "beta0", "beta_x", "tau0", "beta_u", "sigma",
    "cov_box", "y_lower", "y_upper",
];

pub const EXPERIMENT_KEYS: &[&str] = &[
    "n_r",
    "n_o",
    "replicates",
    "lambdas",
    "lambda",
    "lambda_max",
    "lambda_step",
    "weight_mode",
    "bootstrap_resamples",
    "n_big",
    "gamma_o_list",
    "n_r_list",
    "kinds",
    "target_coverage",
    "alpha",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown config key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate config key '{key}'")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("invalid DGP configuration: {0}")]
    Spec(String),
}

/// Parsed settings, remembering the line of each key for error messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    /// Parses `text`, rejecting keys outside `allowed`.
    pub fn parse(text: &str, allowed: &[&[&str]]) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let key = key.trim().to_string();
            if !allowed.iter().any(|set| set.contains(&key.as_str())) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            if entries.contains_key(&key) {
                return Err(ConfigError::Duplicate { line, key });
            }
            entries.insert(key, (line, value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    /// Key/value pairs in key order, for manifests.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.entries
            .get(key)
            .map(|(line, v)| {
                v.parse::<T>().map_err(|e| ConfigError::Value {
                    line: *line,
                    key: key.into(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.entries
            .get(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<T>().map_err(|e| ConfigError::Value {
                            line: *line,
                            key: key.into(),
                            reason: e.to_string(),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn list_or<T>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.list(key)?.unwrap_or(default))
    }

    /// DGP specification: the defaults of `kind` (linear when absent) with
    /// the file's overrides applied.
    pub fn dgp_spec(&self) -> Result<DgpSpec, ConfigError> {
        let kind = self.get_or("kind", DgpKind::Linear)?;
        let mut spec = DgpSpec::defaults(kind);
        if let Some(p) = self.get::<usize>("p")? {
            spec.p = p;
            if self.get::<String>("beta_x")?.is_none() {
                spec.beta_x.resize(p, 0.1);
            }
        }
        let scalars: [(&str, &mut f64); 7] = [
            ("mu_shift", &mut spec.mu_shift),
            ("gamma_r", &mut spec.gamma_r),
            ("gamma_o", &mut spec.gamma_o),
            ("beta0", &mut spec.beta0),
            ("tau0", &mut spec.tau0),
            ("beta_u", &mut spec.beta_u),
            ("sigma", &mut spec.sigma),
        ];
        for (key, slot) in scalars {
            if let Some(v) = self.get(key)? {
                *slot = v;
            }
        }
        if let Some(beta_x) = self.list("beta_x")? {
            spec.beta_x = beta_x;
        }
        let support_keys = ["cov_box", "y_lower", "y_upper"];
        if support_keys.iter().any(|k| self.entries.contains_key(*k)) {
            let current = spec.bounds.unwrap_or(BoundedSupport { cov_box: 3.0, y_lower: -3.0, y_upper: 3.0 });
            spec.bounds = Some(BoundedSupport {
                cov_box: self.get_or("cov_box", current.cov_box)?,
                y_lower: self.get_or("y_lower", current.y_lower)?,
                y_upper: self.get_or("y_upper", current.y_upper)?,
            });
        }
        spec.validate().map_err(|e| ConfigError::Spec(e.to_string()))?;
        Ok(spec)
    }
}
