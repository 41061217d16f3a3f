//! Migration of publish-subscribe components from a host onto a simulated
//! FPGA fabric of softcore CPUs and gateware blocks.
//!
//! A [`Manifest`] describes components, topics, services and their placement.
//! [`compile_plan`] turns it into a [`DeploymentPlan`] (memory map, per-CPU
//! schedules, routing), which a [`System`] executes in virtual time.

pub mod fabric;
pub mod link;
pub mod manifest;
pub mod model;
pub mod runtime;
pub mod scenario;
pub mod sim;

pub use manifest::{
    check_migration, compile_plan, parse_manifest, render_plan, DeploymentPlan, Manifest,
    ManifestError,
};
pub use model::{ComponentSpec, CpuId, Diagnostic, Message, MessageType, Severity, Target};
pub use runtime::{Behavior, BehaviorRegistry, Context, JitterModel, System, SystemConfig};
pub use sim::{Trace, TraceKind, TraceRecord};
