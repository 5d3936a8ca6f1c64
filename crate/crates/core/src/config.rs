//! Engine configuration.
//!
//! Round-trips through a flat `key = value` file; harness flags override
//! file values via [`EngineConfig::apply_override`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// All tunables of the memory policy.
///
/// Defaults: 8 s short window at 2 fps, 32 s medium buffer at 1 fps,
/// 16 keyframes per event node, root set capped at 4, merge level
/// penalty 0.1, 2 event nodes and 1 QA pair retrieved per fine pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Short-window horizon, seconds.
    pub tau_s: f64,
    /// Short-window sampling rate, frames/second.
    pub r_s: f64,
    /// Medium-buffer horizon, seconds. Also the event-window cadence.
    pub tau_m: f64,
    /// Medium-buffer sampling rate, frames/second.
    pub r_m: f64,
    /// Keyframes retained per event node.
    pub n_f: usize,
    /// Maximum number of forest roots.
    pub n_r: usize,
    /// Merge-score penalty per unit of combined hierarchy level.
    pub lambda: f64,
    /// Event nodes retrieved per fine pass.
    pub k_f: usize,
    /// QA pairs retrieved per fine pass.
    pub k_q: usize,
    /// Token cost charged per context frame.
    pub frame_token_cost: u64,
    /// Token cap applied to node summaries and the QA digest.
    pub summary_token_cap: u64,
    /// Embedding dimensionality.
    pub embed_dim: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tau_s: 8.0,
            r_s: 2.0,
            tau_m: 32.0,
            r_m: 1.0,
            n_f: 16,
            n_r: 4,
            lambda: 0.1,
            k_f: 2,
            k_q: 1,
            frame_token_cost: 256,
            summary_token_cap: 256,
            embed_dim: 256,
        }
    }
}

const KEYS: &[&str] = &[
    "tau_s",
    "r_s",
    "tau_m",
    "r_m",
    "n_f",
    "n_r",
    "lambda",
    "k_f",
    "k_q",
    "frame_token_cost",
    "summary_token_cap",
    "embed_dim",
];

impl EngineConfig {
    /// Check every invariant, reporting the first violation.
    pub fn validate(self) -> Result<Self, ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        if !(self.tau_s.is_finite() && self.tau_s > 0.0) {
            return err("tau_s > 0 required");
        }
        if !(self.tau_m.is_finite() && self.tau_m > 0.0) {
            return err("tau_m > 0 required");
        }
        if !(self.r_s.is_finite() && self.r_s > 0.0) {
            return err("r_s > 0 required");
        }
        if !(self.r_m.is_finite() && self.r_m > 0.0) {
            return err("r_m > 0 required");
        }
        if self.tau_s >= self.tau_m {
            return err("tau_s < tau_m required");
        }
        if self.r_m >= self.r_s {
            return err("r_m < r_s required");
        }
        if self.n_f < 1 {
            return err("n_f ≥ 1 required");
        }
        if self.n_r < 2 {
            return err("n_r ≥ 2 required");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return err("lambda ≥ 0 required");
        }
        if self.k_f < 1 {
            return err("k_f ≥ 1 required");
        }
        if self.summary_token_cap < 1 {
            return err("summary_token_cap ≥ 1 required");
        }
        if self.embed_dim < 1 {
            return err("embed_dim ≥ 1 required");
        }
        Ok(self)
    }

    /// Parse a flat `key = value` file. `#` starts a comment; blank
    /// lines are skipped; unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", idx + 1)))?;
            cfg.apply_override(key.trim(), value.trim())?;
        }
        cfg.validate()
    }

    /// Set one field from its textual form.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value
                .parse()
                .map_err(|_| ConfigError(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "tau_s" => self.tau_s = num(key, value)?,
            "r_s" => self.r_s = num(key, value)?,
            "tau_m" => self.tau_m = num(key, value)?,
            "r_m" => self.r_m = num(key, value)?,
            "n_f" => self.n_f = num(key, value)?,
            "n_r" => self.n_r = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "k_f" => self.k_f = num(key, value)?,
            "k_q" => self.k_q = num(key, value)?,
            "frame_token_cost" => self.frame_token_cost = num(key, value)?,
            "summary_token_cap" => self.summary_token_cap = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            other => return Err(ConfigError(format!("unknown key: {other}"))),
        }
        Ok(())
    }

    /// Serialize as the flat key-value format accepted by [`from_kv`].
    ///
    /// [`from_kv`]: EngineConfig::from_kv
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "tau_s" => self.tau_s.to_string(),
                "r_s" => self.r_s.to_string(),
                "tau_m" => self.tau_m.to_string(),
                "r_m" => self.r_m.to_string(),
                "n_f" => self.n_f.to_string(),
                "n_r" => self.n_r.to_string(),
                "lambda" => self.lambda.to_string(),
                "k_f" => self.k_f.to_string(),
                "k_q" => self.k_q.to_string(),
                "frame_token_cost" => self.frame_token_cost.to_string(),
                "summary_token_cap" => self.summary_token_cap.to_string(),
                "embed_dim" => self.embed_dim.to_string(),
                _ => unreachable!(),
            };
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}
