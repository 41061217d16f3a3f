//! Deployment manifests: parsing, compilation into a [`DeploymentPlan`],
//! schedulability analysis, and migration equivalence checking.

mod compile;
mod migration;
mod parse;
mod plan_file;
mod rta;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{ComponentSpec, Placement, ServiceSpec, Subject, Target, TopicSpec};
use crate::runtime::JitterModel;

pub use compile::{
    assign_topic_addresses, compile_plan, compile_plan_with, synthesize_schedule,
    CapacityExceeded, ChannelDirection, ChannelEntry, ChannelSubject, CompileError,
    DeploymentPlan, GatewareLibrary, MemoryEntry, MemoryMap, RoutingTable, ScheduleTable,
    ScheduledTask, ServiceEdge, ServiceMechanism, ServiceRoute, TopicEdge, TopicMechanism,
    TopicRoute, MAX_BRIDGED_PAYLOAD,
};
pub use migration::{check_migration, EquivalenceReport, MigrationError, SemanticsClass, TopicClassChange};
pub use parse::parse_manifest;
pub use plan_file::render_plan;
pub use rta::{hyperperiod, response_time_analysis, ResponseTime, RtaError, RtaResult, RtaTask};

/// Fabric-wide parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FabricConfig {
    pub n_fpgas: u32,
    pub cpus_per_fpga: u32,
    pub shm_words_total: u32,
    pub shm_cycle_us: u64,
    /// `None` means the link has no rate limit.
    pub link_baud_bytes_per_ms: Option<u64>,
    /// One-way transfer delay of the address-data service bus.
    pub bus_delay_us: u64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            n_fpgas: 1,
            cpus_per_fpga: 1,
            shm_words_total: 1024,
            shm_cycle_us: 100,
            link_baud_bytes_per_ms: None,
            bus_delay_us: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HostConfig {
    pub jitter: JitterModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub topics: Vec<TopicSpec>,
    pub services: Vec<ServiceSpec>,
    pub components: Vec<ComponentSpec>,
    pub placements: Vec<Placement>,
    pub fabric: FabricConfig,
    pub host: HostConfig,
    /// Declaration line of each named item, when parsed from text.
    pub source_lines: BTreeMap<Subject, usize>,
}

impl Manifest {
    pub fn topic(&self, name: &str) -> Option<&TopicSpec> {
        self.topics.iter().find(|t| t.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn target_of(&self, component: &str) -> Option<&Target> {
        self.placements
            .iter()
            .find(|p| p.component == component)
            .map(|p| &p.target)
    }

    pub fn line_of(&self, subject: &Subject) -> Option<usize> {
        self.source_lines.get(subject).copied()
    }

    /// Replaces the placement of one component.
    pub fn with_placement(mut self, component: &str, target: Target) -> Manifest {
        for p in &mut self.placements {
            if p.component == component {
                p.target = target.clone();
            }
        }
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}: duplicate {kind} `{name}`")]
    DuplicateName {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("{line}: unknown {kind} `{name}`")]
    UnknownReference {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("{line}: {message}")]
    InvariantViolation { line: usize, message: String },
}

impl ManifestError {
    pub fn line(&self) -> usize {
        match self {
            ManifestError::Syntax { line, .. }
            | ManifestError::DuplicateName { line, .. }
            | ManifestError::UnknownReference { line, .. }
            | ManifestError::InvariantViolation { line, .. } => *line,
        }
    }
}
