//! Run configuration: country, operators, CBS interval, N_c and the CSV layout.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{check_mnos, MnoConfig, Schema};
use crate::ndd::CbsBounds;

const SPAIN_PROFILE: &str = include_str!("../profiles/spain.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mcc: u32,
    #[serde(default = "default_n_c")]
    pub n_c: usize,
    #[serde(default)]
    pub cbs: CbsBounds,
    #[serde(default)]
    pub schema: Schema,
    /// When set, `drill` attaches a suggested deployment rectangle holding this
    /// fraction of each operator's top-cell samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggest_mass_fraction: Option<f64>,
    #[serde(rename = "mno")]
    pub mnos: Vec<MnoConfig>,
}

fn default_n_c() -> usize {
    100
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    /// The bundled profile for Spain's three largest operators.
    pub fn spain_profile() -> Self {
        Self::from_toml_str(SPAIN_PROFILE).expect("bundled profile is valid")
    }

    pub fn spain_profile_text() -> &'static str {
        SPAIN_PROFILE
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.n_c == 0 {
            return Err(ConfigError::Invalid("n_c must be at least 1".into()));
        }
        if let Some(f) = self.suggest_mass_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "suggest_mass_fraction {f} outside (0, 1]"
                )));
            }
        }
        self.schema.check().map_err(ConfigError::Invalid)?;
        check_mnos(&self.mnos).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn mno(&self, mnc: u32) -> Option<&MnoConfig> {
        self.mnos.iter().find(|m| m.mnc == mnc)
    }
}
