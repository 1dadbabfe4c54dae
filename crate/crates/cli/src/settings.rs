//! `--config` overrides: a TOML file whose sections replace individual
//! defaults, for example
//!
//! ```toml
//! [simulation]
//! wall_delay = 1.0
//! [simulation.shadow]
//! delay_full = 2.0
//! [calibration]
//! candidate_sizes = [4]
//! search = "greedy"
//! ```
//!
//! Unknown keys are rejected. Seeds are not configurable here; all
//! randomness comes from `--seed`.

use std::path::Path;

use doorcal::doorfind::{DetectConfig, MapGenConfig};
use doorcal::simkit::TourConfig;
use doorcal::{CalibrationConfig, EkfConfig, Error, Result, RuntimeConfig, SimConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// Walking speed and sampling interval of simulated sessions.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Walk {
    /// m/s.
    pub speed: f64,
    /// Seconds between epochs.
    pub dt: f64,
}

impl Default for Walk {
    fn default() -> Self {
        Walk { speed: 1.0, dt: 0.1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub walk: Walk,
    pub tour: TourConfig,
    pub simulation: SimConfig,
    pub ekf: EkfConfig,
    pub calibration: CalibrationConfig,
    pub runtime: RuntimeConfig,
    pub mapgen: MapGenConfig,
    pub detect: DetectConfig,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let settings: Settings = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        settings.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.walk.speed > 0.0 && self.walk.dt > 0.0) {
            return Err(Error::InvalidInput("walk speed and dt must be positive".into()));
        }
        self.simulation.validate()?;
        self.ekf.validate()?;
        self.calibration.validate()?;
        self.runtime.validate()
    }
}

/// Independent seeds for the walk and the measurement noise, both drawn
/// from the one user seed.
pub fn derive_seeds(seed: u64) -> (u64, u64) {
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    (root.next_u64(), root.next_u64())
}
