//! Editing hyperparameters, named presets, and the flat `key = value`
//! config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for subspace estimation, strength scheduling and gating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditConfig {
    /// Visual evidence rank.
    pub r: usize,
    /// Anti-prior rank.
    pub q: usize,
    /// Base strength of non-visual suppression.
    pub kappa: f64,
    /// Base strength of anti-prior suppression.
    pub lambda0: f64,
    /// Cap on both strengths.
    pub lambda_max: f64,
    /// Stabilizer in the certificates, the strength schedule and the
    /// relevance-weight cosine.
    pub eps_cert: f64,
    /// Edit when VCR falls strictly below this.
    pub gamma_v: f64,
    /// Edit when PCR rises strictly above this.
    pub gamma_p: f64,
    /// Text-cache capacity in rows.
    pub window: usize,
    /// Re-estimate the visual subspace every `stride` generated tokens.
    pub stride: usize,
    /// Layer the visual features and text cache are read from. Recorded
    /// for provenance only.
    pub anchor_layer: u32,
    /// Expected state width. When set, replay rejects traces of any other
    /// width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            r: 8,
            q: 5,
            kappa: 0.60,
            lambda0: 0.26,
            lambda_max: 3.6,
            eps_cert: 1e-8,
            gamma_v: 0.25,
            gamma_p: 0.10,
            window: 512,
            stride: 1,
            anchor_layer: 26,
            d: None,
        }
    }
}

/// Names accepted by [`EditConfig::preset`].
pub const PRESETS: &[&str] = &["default", "llava7b"];

impl EditConfig {
    /// The LLaVA-1.5-7B table values, including its `1e-6` stabilizer.
    pub fn llava7b() -> Self {
        Self {
            eps_cert: 1e-6,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "llava7b" => Ok(Self::llava7b()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.r == 0 {
            return bad("r must be >= 1");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be positive");
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be positive");
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return bad("lambda_max must be positive");
        }
        if !(self.eps_cert > 0.0 && self.eps_cert.is_finite()) {
            return bad("eps_cert must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma_v) {
            return bad("gamma_v must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma_p) {
            return bad("gamma_p must lie in [0, 1]");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.stride == 0 {
            return bad("stride must be >= 1");
        }
        if self.d == Some(0) {
            return bad("d must be >= 1");
        }
        Ok(())
    }

    /// Parses a flat `key = value` document. An optional `preset = "name"`
    /// line picks the base values; every other key must be a field of
    /// [`EditConfig`] and overrides the base.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = match table.remove("preset") {
            Some(toml::Value::String(name)) => Self::preset(&name)?,
            Some(other) => {
                return Err(Error::Config(format!(
                    "preset must be a string, got {other}"
                )))
            }
            None => Self::default(),
        };
        let mut merged = toml::Table::try_from(base)
            .map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in table {
            if value.is_table() || value.is_array() {
                return Err(Error::Config(format!("{key}: nested values are not allowed")));
            }
            if !merged.contains_key(&key) && key != "d" {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
            // Integers are accepted where floats are expected.
            let value = match (merged.get(&key), value) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            merged.insert(key, value);
        }
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Renders every field as a flat `key = value` document.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }
}
