//! `--config` file: JSON overriding any subset of the built-in thresholds.
//! Explicit command-line flags take precedence over the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::construction::{BiasConfig, LearnabilityConfig};
use crate::error::{Error, Result};
use crate::rdc::DiagnosisConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSettings {
    pub window_size: usize,
    pub tv_threshold: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        let m = crate::monitor::MonitorConfig::default();
        Self {
            window_size: m.window_size,
            tv_threshold: m.tv_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Score cut-off turning paired scores into decisions.
    pub threshold: f64,
    pub alpha: f64,
    pub power: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            alpha: 0.05,
            power: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub bins: usize,
    pub diagnosis: DiagnosisConfig,
    pub monitor: MonitorSettings,
    pub learnability: LearnabilityConfig,
    pub bias: BiasConfig,
    pub experiments: ExperimentSettings,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            bins: 100,
            diagnosis: DiagnosisConfig::default(),
            monitor: MonitorSettings::default(),
            learnability: LearnabilityConfig::default(),
            bias: BiasConfig::default(),
            experiments: ExperimentSettings::default(),
        }
    }
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }
}
