//! The two-wheeled balancing robot: plant model, component behaviors and the
//! bundled before/after-migration deployments.

mod behaviors;
mod config;
mod plant;
mod run;
mod tuning;

pub use behaviors::{
    robot_registry, BalanceGains, ImuInterface, LowPass, MaintainPosition, MotorInterface, Movement, Navigation,
    Pid, PlantHandle, MOVEMENT_MAX_SPEED,
};
pub use config::{ConfigError, Gains, JitterParams, ScenarioConfig};
pub use plant::{open_loop_theta, rk4_step, Plant, PlantParams, PlantSample, PlantState, GRAVITY};
pub use run::{
    compare_trace_csv, compare_traces, run_scenario, CompareError, CompareReport, MissDelta,
    ScenarioError, ScenarioRun, ScenarioSummary,
};
pub use tuning::{itae, jitter_sweep, median, thresholds, tune_gains, Candidate, SweepPoint, TuningGrid};

use crate::manifest::{parse_manifest, Manifest};

/// Deployment before migration: balancing and filtering on the host.
pub const FIG2_MANIFEST: &str = include_str!("data/fig2.manifest");
/// Deployment after migration: `maintain_position` on softcore 0.0, the
/// filter as a gateware block.
pub const FIG3_MANIFEST: &str = include_str!("data/fig3.manifest");
/// Frozen scenario configuration (plant, gains, jitter).
pub const ROBOT_SCENARIO: &str = include_str!("data/robot.toml");

/// Identifier of the bundled scenario.
pub const ROBOT_SCENARIO_ID: &str = "balancing-robot";

pub fn fig2_manifest() -> Manifest {
    parse_manifest(FIG2_MANIFEST).expect("bundled manifest parses")
}

pub fn fig3_manifest() -> Manifest {
    parse_manifest(FIG3_MANIFEST).expect("bundled manifest parses")
}

pub fn robot_scenario() -> ScenarioConfig {
    ScenarioConfig::parse(ROBOT_SCENARIO).expect("bundled scenario parses")
}
