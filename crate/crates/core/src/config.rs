//! Experiment configuration in TOML.
//!
//! ```toml
//! [data]
//! root = "data/redd"
//! period = 60
//! max_gap = 180
//!
//! [train]
//! seed = 7
//! max_epochs = 30
//!
//! [appliances.refrigerator]
//! on_threshold = 60.0
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DEFAULT_MAX_GAP, DEFAULT_PERIOD};
use crate::signature::{ApplianceParams, SignatureError};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("no built-in parameters for appliance {0:?}; set on_threshold, min_on and min_off")]
    UnknownAppliance(String),
    #[error(transparent)]
    Params(#[from] SignatureError),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    pub period: u32,
    pub max_gap: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            period: DEFAULT_PERIOD,
            max_gap: DEFAULT_MAX_GAP,
        }
    }
}

/// Per-appliance overrides of the built-in calibration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplianceOverride {
    pub on_threshold: Option<f32>,
    pub min_on: Option<u32>,
    pub min_off: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub appliances: BTreeMap<String, ApplianceOverride>,
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.data.period == 0 {
            return Err(ConfigError::Invalid("data.period must be positive".into()));
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for name in self.appliances.keys() {
            self.appliance_params(name)?;
        }
        Ok(())
    }

    /// Built-in parameters for `name` with any configured overrides applied.
    pub fn appliance_params(&self, name: &str) -> Result<ApplianceParams, ConfigError> {
        let o = self.appliances.get(name).cloned().unwrap_or_default();
        let base = ApplianceParams::defaults(name);
        let params = match (base, o) {
            (Some(b), o) => ApplianceParams {
                on_threshold: o.on_threshold.unwrap_or(b.on_threshold),
                min_on: o.min_on.unwrap_or(b.min_on),
                min_off: o.min_off.unwrap_or(b.min_off),
                ..b
            },
            (
                None,
                ApplianceOverride {
                    on_threshold: Some(on_threshold),
                    min_on: Some(min_on),
                    min_off: Some(min_off),
                },
            ) => ApplianceParams {
                name: name.to_string(),
                on_threshold,
                min_on,
                min_off,
            },
            (None, _) => return Err(ConfigError::UnknownAppliance(name.to_string())),
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let config: Config = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}
