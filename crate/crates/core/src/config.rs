//! Optional TOML configuration for replays.
//!
//! ```toml
//! threshold_counts = 200
//! confirm_window_ms = 5000
//! sample_period_ms = 100
//! staleness_s = 10
//! retries = 3        # attempts per AT step
//! timeout_ms = 10000 # per AT attempt
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{DetectionError, DetectorConfig};
use crate::gsm::DriverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub threshold_counts: u16,
    pub confirm_window_ms: u64,
    pub sample_period_ms: u64,
    pub staleness_s: u64,
    pub retries: u32,
    pub timeout_ms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let detector = DetectorConfig::default();
        let driver = DriverSettings::default();
        Self {
            threshold_counts: detector.threshold_counts,
            confirm_window_ms: detector.confirm_window_ms,
            sample_period_ms: detector.sample_period_ms,
            staleness_s: crate::detection::DEFAULT_STALENESS_MS / 1000,
            retries: driver.attempts,
            timeout_ms: driver.timeout_ms,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: SimConfig = toml::from_str(text)?;
        config.detector()?;
        anyhow::ensure!(config.retries > 0, "retries must be at least 1");
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn detector(&self) -> Result<DetectorConfig, DetectionError> {
        let c = DetectorConfig {
            threshold_counts: self.threshold_counts,
            confirm_window_ms: self.confirm_window_ms,
            sample_period_ms: self.sample_period_ms,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn staleness_ms(&self) -> u64 {
        self.staleness_s * 1000
    }

    pub fn driver(&self) -> DriverSettings {
        DriverSettings {
            timeout_ms: self.timeout_ms,
            attempts: self.retries,
        }
    }
}
