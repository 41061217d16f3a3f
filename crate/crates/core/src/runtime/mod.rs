//! Component runtime: the behavior interface, host threads with activation
//! jitter, and the [`System`] that executes a deployment plan.

mod behavior;
mod host;
mod system;

pub use behavior::{Behavior, BehaviorRegistry, Context, Output, RuntimeError, ServiceOutcome};
pub use host::{host_activations, host_releases, HostActivation, HostRelease, HostThread, JitterModel};
pub use system::{Domain, System, SystemConfig, SystemError};
