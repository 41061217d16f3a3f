use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::JitterModel;

use super::plant::PlantParams;

#[derive(Debug, Error)]
#[error("scenario config: {0}")]
pub struct ConfigError(#[from] toml::de::Error);

/// Controller gains and limits shared by the robot behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// Wheel-velocity PID on the fabric.
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// `maintain_position` places two closed-loop poles at `-balance_pole`
    /// and two at `-position_pole` (rad/s).
    pub balance_pole: f64,
    pub position_pole: f64,
    /// Low-pass filter coefficient.
    pub alpha: f64,
    /// Wheel torque command limit.
    pub u_max: f64,
    /// Wheel velocity setpoint limit in m/s.
    pub v_max: f64,
    /// `pid` cuts the motor above this filtered tilt in rad.
    pub tilt_cutoff: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            kp: 3.0,
            ki: 0.0,
            kd: 0.0,
            balance_pole: 50.0,
            position_pole: 2.0,
            alpha: 0.5,
            u_max: 1.0,
            v_max: 2.0,
            tilt_cutoff: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterParams {
    pub base_latency_us: u64,
    pub spike_latency_us: u64,
    pub spike_probability: f64,
}

impl JitterParams {
    pub fn model(&self, seed: u64) -> JitterModel {
        JitterModel {
            base_latency_us: self.base_latency_us,
            spike_latency_us: self.spike_latency_us,
            spike_probability: self.spike_probability,
            rng_seed: seed,
        }
    }
}

/// Everything a run needs besides the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_us: u64,
    /// Initial lean angle in rad.
    pub theta0: f64,
    /// Plant state sampling period for the trace.
    pub sample_us: u64,
    /// Waypoints published by `navigation`, one per activation, cycled.
    pub waypoints: Vec<f64>,
    pub plant: PlantParams,
    pub gains: Gains,
    /// Host activation jitter; replaces the manifest's host block.
    pub jitter: JitterParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration_us: 10_000_000,
            theta0: 0.05,
            sample_us: 1000,
            waypoints: vec![0.0],
            plant: PlantParams::default(),
            gains: Gains::default(),
            jitter: JitterParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn without_jitter(mut self) -> ScenarioConfig {
        self.jitter = JitterParams::default();
        self
    }
}
