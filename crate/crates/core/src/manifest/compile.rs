use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{
    slot_layout, validate_graph, CpuId, Diagnostic, Severity, Subject, Target,
};

use super::rta::{response_time_analysis, ResponseTime, RtaTask};
use super::Manifest;

/// Largest payload a single link frame can carry.
pub const MAX_BRIDGED_PAYLOAD: usize = 255;

/// Library gateware blocks, each functionally equivalent to one registered
/// behavior.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GatewareLibrary {
    blocks: BTreeMap<String, String>,
}

impl GatewareLibrary {
    pub fn empty() -> GatewareLibrary {
        GatewareLibrary::default()
    }

    /// The blocks shipped with the toolkit.
    pub fn standard() -> GatewareLibrary {
        GatewareLibrary::empty().with_block("lowpass", "lowpass")
    }

    pub fn with_block(mut self, block: impl Into<String>, behavior: impl Into<String>) -> Self {
        self.blocks.insert(block.into(), behavior.into());
        self
    }

    /// Behavior that `block` is equivalent to.
    pub fn behavior_of(&self, block: &str) -> Option<&str> {
        self.blocks.get(block).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryEntry {
    pub base: u32,
    pub size_words: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryMap {
    pub capacity: u32,
    /// Keyed by topic name.
    pub entries: BTreeMap<String, MemoryEntry>,
}

impl MemoryMap {
    pub fn used_words(&self) -> u32 {
        self.entries.values().map(|e| e.size_words).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("shared memory capacity exceeded by topic `{topic}`: needs {needed} words, {available} available")]
pub struct CapacityExceeded {
    pub topic: String,
    pub needed: u32,
    pub available: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledTask {
    pub component: String,
    pub thread: String,
    pub period_us: u64,
    pub budget_us: u64,
    pub deadline_us: u64,
    pub priority: i64,
    /// `None` when the analysis could not run (duplicate priorities).
    pub response: Option<ResponseTime>,
}

impl ScheduledTask {
    pub fn key(&self) -> String {
        format!("{}.{}", self.component, self.thread)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTable {
    pub cpu: CpuId,
    /// Descending priority.
    pub tasks: Vec<ScheduledTask>,
}

impl ScheduleTable {
    pub fn schedulable(&self) -> bool {
        self.tasks
            .iter()
            .all(|t| t.response.is_some_and(ResponseTime::is_schedulable))
    }

    pub fn utilization(&self) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.budget_us as f64 / t.period_us as f64)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicMechanism {
    IntraCpuDirect,
    SharedMemory { address: u32 },
    LinkBridge { channel: u16 },
    HostLocal,
}

impl fmt::Display for TopicMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopicMechanism::IntraCpuDirect => f.write_str("intra_cpu_direct"),
            TopicMechanism::SharedMemory { address } => write!(f, "shared_memory address={address}"),
            TopicMechanism::LinkBridge { channel } => write!(f, "link_bridge channel={channel}"),
            TopicMechanism::HostLocal => f.write_str("host_local"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceMechanism {
    IntraCpuDirect,
    ServiceBus { provider: String },
    LinkBridge { channel: u16 },
    HostLocal,
}

impl fmt::Display for ServiceMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceMechanism::IntraCpuDirect => f.write_str("intra_cpu_direct"),
            ServiceMechanism::ServiceBus { provider } => write!(f, "service_bus provider={provider}"),
            ServiceMechanism::LinkBridge { channel } => write!(f, "link_bridge channel={channel}"),
            ServiceMechanism::HostLocal => f.write_str("host_local"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicEdge {
    pub publisher: String,
    pub subscriber: String,
    pub mechanism: TopicMechanism,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRoute {
    pub topic: String,
    /// Slot of the topic when any fabric-side delivery goes through shared
    /// memory (including bridged host publications read on the fabric).
    pub shm_address: Option<u32>,
    pub channel: Option<u16>,
    pub edges: Vec<TopicEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceEdge {
    pub caller: String,
    pub provider: String,
    pub mechanism: ServiceMechanism,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRoute {
    pub service: String,
    pub provider: Option<String>,
    pub channel: Option<u16>,
    pub edges: Vec<ServiceEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChannelSubject {
    Topic(String),
    Service(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelDirection {
    HostToFabric,
    FabricToHost,
    Both,
}

impl fmt::Display for ChannelDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelDirection::HostToFabric => "host_to_fabric",
            ChannelDirection::FabricToHost => "fabric_to_host",
            ChannelDirection::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelEntry {
    pub id: u16,
    pub subject: ChannelSubject,
    pub direction: ChannelDirection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    pub placements: BTreeMap<String, Target>,
    /// Every declared topic, sorted by name.
    pub topics: Vec<TopicRoute>,
    /// Every declared service, sorted by name.
    pub services: Vec<ServiceRoute>,
    /// Ascending channel id.
    pub channels: Vec<ChannelEntry>,
}

impl RoutingTable {
    pub fn topic(&self, name: &str) -> Option<&TopicRoute> {
        self.topics.iter().find(|t| t.topic == name)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceRoute> {
        self.services.iter().find(|s| s.service == name)
    }

    pub fn channel(&self, id: u16) -> Option<&ChannelEntry> {
        self.channels.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub memory_map: MemoryMap,
    pub schedules: Vec<ScheduleTable>,
    pub routing: RoutingTable,
    pub diagnostics: Vec<Diagnostic>,
}

impl DeploymentPlan {
    pub fn schedule(&self, cpu: CpuId) -> Option<&ScheduleTable> {
        self.schedules.iter().find(|s| s.cpu == cpu)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("manifest has {} error(s)", self.errors().count())]
pub struct CompileError {
    /// All diagnostics, errors and warnings.
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileError {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairKind {
    HostLocal,
    Link,
    Intra,
    Shm,
}

fn pair_kind(a_name: &str, a: &Target, b_name: &str, b: &Target) -> PairKind {
    match (a, b) {
        (Target::Host, Target::Host) => PairKind::HostLocal,
        (Target::Host, _) | (_, Target::Host) => PairKind::Link,
        (Target::Softcore(x), Target::Softcore(y)) if x == y => PairKind::Intra,
        _ if a_name == b_name => PairKind::Intra,
        _ => PairKind::Shm,
    }
}

struct RawEdge<'a> {
    publisher: &'a str,
    subscriber: &'a str,
    kind: PairKind,
    subscriber_on_fabric: bool,
}

struct TopicAnalysis<'a> {
    edges: Vec<RawEdge<'a>>,
    /// Nodes that write the topic's slot; `None` stands for the link bridge.
    slot_writers: BTreeSet<Option<&'a str>>,
}

impl TopicAnalysis<'_> {
    fn needs_slot(&self) -> bool {
        !self.slot_writers.is_empty()
    }

    fn bridged(&self) -> bool {
        self.edges.iter().any(|e| e.kind == PairKind::Link)
    }
}

fn analyze_topics(m: &Manifest) -> BTreeMap<&str, TopicAnalysis<'_>> {
    let target = |c: &str| m.target_of(c).cloned().unwrap_or(Target::Host);
    let mut out = BTreeMap::new();
    for t in &m.topics {
        let mut pubs: Vec<&str> = m
            .components
            .iter()
            .filter(|c| c.publishes.contains(&t.name))
            .map(|c| c.name.as_str())
            .collect();
        let mut subs: Vec<&str> = m
            .components
            .iter()
            .filter(|c| c.subscribes.contains(&t.name))
            .map(|c| c.name.as_str())
            .collect();
        pubs.sort();
        subs.sort();
        let mut edges = Vec::new();
        let mut slot_writers = BTreeSet::new();
        for &p in &pubs {
            let pt = target(p);
            for &s in &subs {
                let st = target(s);
                let kind = pair_kind(p, &pt, s, &st);
                match kind {
                    PairKind::Shm => {
                        slot_writers.insert(Some(p));
                    }
                    PairKind::Link if st.is_fabric() => {
                        slot_writers.insert(None);
                    }
                    _ => {}
                }
                edges.push(RawEdge {
                    publisher: p,
                    subscriber: s,
                    kind,
                    subscriber_on_fabric: st.is_fabric(),
                });
            }
        }
        out.insert(
            t.name.as_str(),
            TopicAnalysis {
                edges,
                slot_writers,
            },
        );
    }
    out
}

/// First-fit word addresses for every topic that needs a shared-memory slot,
/// in lexicographic topic order starting at word 0.
pub fn assign_topic_addresses(m: &Manifest) -> Result<MemoryMap, CapacityExceeded> {
    let analysis = analyze_topics(m);
    let capacity = m.fabric.shm_words_total;
    let mut entries = BTreeMap::new();
    let mut next = 0u32;
    for (name, a) in &analysis {
        if !a.needs_slot() {
            continue;
        }
        let ty = &m.topic(name).expect("analyzed topics exist").ty;
        let size = slot_layout(name, ty).size_words as u32;
        let available = capacity.saturating_sub(next);
        if size > available {
            return Err(CapacityExceeded {
                topic: name.to_string(),
                needed: size,
                available,
            });
        }
        entries.insert(
            name.to_string(),
            MemoryEntry {
                base: next,
                size_words: size,
            },
        );
        next += size;
    }
    Ok(MemoryMap { capacity, entries })
}

/// Builds the schedule table for one softcore CPU and analyzes it.
///
/// Threads without an explicit priority are ranked rate-monotonic (shorter
/// period first, ties by `component.thread`) below every explicit priority.
pub fn synthesize_schedule(m: &Manifest, cpu: CpuId) -> (ScheduleTable, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let mut tasks: Vec<ScheduledTask> = Vec::new();
    for c in &m.components {
        if m.target_of(&c.name) != Some(&Target::Softcore(cpu)) {
            continue;
        }
        for t in &c.threads {
            tasks.push(ScheduledTask {
                component: c.name.clone(),
                thread: t.name.clone(),
                period_us: t.period_us,
                budget_us: t.budget_us,
                deadline_us: t.deadline_us,
                priority: t.priority.unwrap_or(0),
                response: None,
            });
        }
    }
    tasks.sort_by_key(|t| t.key());

    let explicit: Vec<(i64, String)> = m
        .components
        .iter()
        .filter(|c| m.target_of(&c.name) == Some(&Target::Softcore(cpu)))
        .flat_map(|c| {
            c.threads
                .iter()
                .filter_map(|t| t.priority.map(|p| (p, format!("{}.{}", c.name, t.name))))
        })
        .collect();
    let explicit_keys: BTreeSet<&str> = explicit.iter().map(|(_, k)| k.as_str()).collect();

    let mut duplicate = false;
    let mut by_prio: BTreeMap<i64, Vec<&str>> = BTreeMap::new();
    for (p, k) in &explicit {
        by_prio.entry(*p).or_default().push(k);
    }
    for (p, ks) in &by_prio {
        if ks.len() > 1 {
            duplicate = true;
            let mut ks = ks.clone();
            ks.sort();
            diags.push(Diagnostic::error(
                Some(Subject::Cpu(cpu)),
                format!("cpu {cpu}: priority {p} assigned to {}", ks.join(", ")),
            ));
        }
    }

    let mut implicit: Vec<usize> = (0..tasks.len())
        .filter(|&i| !explicit_keys.contains(tasks[i].key().as_str()))
        .collect();
    implicit.sort_by(|&a, &b| {
        (tasks[a].period_us, tasks[a].key()).cmp(&(tasks[b].period_us, tasks[b].key()))
    });
    let base = match explicit.iter().map(|(p, _)| *p).min() {
        Some(min) => min - 1,
        None => implicit.len() as i64 - 1,
    };
    for (rank, &i) in implicit.iter().enumerate() {
        tasks[i].priority = base - rank as i64;
    }
    tasks.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.key().cmp(&b.key())));

    if !duplicate {
        let rta: Vec<RtaTask> = tasks
            .iter()
            .map(|t| RtaTask {
                budget: t.budget_us,
                period: t.period_us,
                deadline: t.deadline_us,
                priority: t.priority,
            })
            .collect();
        let result = response_time_analysis(&rta).expect("priorities unique and budgets > 0");
        for (t, r) in tasks.iter_mut().zip(&result.responses) {
            t.response = Some(*r);
            if let ResponseTime::Unschedulable { exceeded_at } = r {
                diags.push(Diagnostic::error(
                    Some(Subject::Component(t.component.clone())),
                    format!(
                        "cpu {cpu}: thread `{}` is unschedulable: response time reaches {exceeded_at} us, deadline is {} us (utilization {:.3})",
                        t.key(),
                        t.deadline_us,
                        tasks_utilization(&rta)
                    ),
                ));
            }
        }
    }
    (ScheduleTable { cpu, tasks }, diags)
}

fn tasks_utilization(tasks: &[RtaTask]) -> f64 {
    tasks
        .iter()
        .map(|t| t.budget as f64 / t.period as f64)
        .sum()
}

/// Compiles with the standard gateware library.
pub fn compile_plan(m: &Manifest) -> Result<DeploymentPlan, CompileError> {
    compile_plan_with(m, &GatewareLibrary::standard())
}

pub fn compile_plan_with(
    m: &Manifest,
    library: &GatewareLibrary,
) -> Result<DeploymentPlan, CompileError> {
    let mut diags: BTreeSet<Diagnostic> =
        validate_graph(&m.components, &m.topics, &m.services).into_iter().collect();

    let mut placed: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &m.placements {
        *placed.entry(p.component.as_str()).or_default() += 1;
    }
    for c in &m.components {
        let subj = Some(Subject::Component(c.name.clone()));
        match placed.get(c.name.as_str()) {
            Some(1) => {}
            Some(n) => {
                diags.insert(Diagnostic::error(
                    subj.clone(),
                    format!("component `{}` has {n} placements", c.name),
                ));
            }
            None => {
                diags.insert(Diagnostic::error(
                    subj.clone(),
                    format!("component `{}` has no placement", c.name),
                ));
            }
        }
        if let Some(Target::Gateware(block)) = m.target_of(&c.name) {
            match library.behavior_of(block) {
                None => {
                    diags.insert(Diagnostic::error(
                        subj.clone(),
                        format!("component `{}`: unknown gateware block `{block}`", c.name),
                    ));
                }
                Some(b) if b != c.behavior => {
                    diags.insert(Diagnostic::error(
                        subj.clone(),
                        format!(
                            "component `{}`: behavior `{}` has no gateware equivalent `{block}` (block implements `{b}`)",
                            c.name, c.behavior
                        ),
                    ));
                }
                Some(_) => {}
            }
            if !c.provides.is_empty() || !c.calls.is_empty() {
                diags.insert(Diagnostic::error(
                    subj.clone(),
                    format!("gateware component `{}` cannot provide or call services", c.name),
                ));
            }
        }
    }
    for p in &m.placements {
        if m.component(&p.component).is_none() {
            diags.insert(Diagnostic::error(
                None,
                format!("placement for unknown component `{}`", p.component),
            ));
        }
    }

    let analysis = analyze_topics(m);
    for (name, a) in &analysis {
        let subj = Some(Subject::Topic(name.to_string()));
        if a.slot_writers.len() > 1 {
            let who: Vec<&str> = a
                .slot_writers
                .iter()
                .map(|w| w.unwrap_or("<link bridge>"))
                .collect();
            diags.insert(Diagnostic::error(
                subj.clone(),
                format!(
                    "topic `{name}` has {} writers on one shared-memory slot: {}",
                    who.len(),
                    who.join(", ")
                ),
            ));
        }
        if a.bridged() {
            let size = m.topic(name).map(|t| t.ty.encoded_size()).unwrap_or(0);
            if size > MAX_BRIDGED_PAYLOAD {
                diags.insert(Diagnostic::error(
                    subj,
                    format!(
                        "topic `{name}` crosses the link but its message is {size} bytes (max {MAX_BRIDGED_PAYLOAD})"
                    ),
                ));
            }
        }
    }

    let memory_map = match assign_topic_addresses(m) {
        Ok(mm) => mm,
        Err(e) => {
            diags.insert(Diagnostic::error(
                Some(Subject::Topic(e.topic.clone())),
                e.to_string(),
            ));
            MemoryMap {
                capacity: m.fabric.shm_words_total,
                entries: BTreeMap::new(),
            }
        }
    };

    // Channel ids: bridged topics first, then bridged services, each in
    // lexicographic order, ascending from 1.
    let mut channels = Vec::new();
    let mut next_channel: u16 = 1;
    let mut topic_channels: BTreeMap<&str, u16> = BTreeMap::new();
    let target = |c: &str| m.target_of(c).cloned().unwrap_or(Target::Host);
    for (name, a) in &analysis {
        if !a.bridged() {
            continue;
        }
        let h2f = a
            .edges
            .iter()
            .any(|e| e.kind == PairKind::Link && e.subscriber_on_fabric);
        let f2h = a
            .edges
            .iter()
            .any(|e| e.kind == PairKind::Link && !e.subscriber_on_fabric);
        channels.push(ChannelEntry {
            id: next_channel,
            subject: ChannelSubject::Topic(name.to_string()),
            direction: direction(h2f, f2h),
        });
        topic_channels.insert(name, next_channel);
        next_channel += 1;
    }

    let mut services: Vec<&crate::model::ServiceSpec> = m.services.iter().collect();
    services.sort_by(|a, b| a.name.cmp(&b.name));
    let mut service_routes = Vec::new();
    for s in services {
        let provider = m
            .components
            .iter()
            .filter(|c| c.provides.contains(&s.name))
            .map(|c| c.name.clone())
            .min();
        let mut callers: Vec<&str> = m
            .components
            .iter()
            .filter(|c| c.calls.contains(&s.name))
            .map(|c| c.name.as_str())
            .collect();
        callers.sort();
        let mut channel = None;
        let mut edges = Vec::new();
        if let Some(provider) = &provider {
            let pt = target(provider);
            let mut h2f = false;
            let mut f2h = false;
            for &caller in &callers {
                let ct = target(caller);
                let kind = pair_kind(caller, &ct, provider, &pt);
                if kind == PairKind::Link {
                    if ct.is_fabric() {
                        f2h = true;
                    } else {
                        h2f = true;
                    }
                }
                edges.push((caller, kind));
            }
            if h2f || f2h {
                for msg in [&s.request, &s.response] {
                    if msg.encoded_size() > MAX_BRIDGED_PAYLOAD {
                        diags.insert(Diagnostic::error(
                            Some(Subject::Service(s.name.clone())),
                            format!(
                                "service `{}` crosses the link but `{}` is {} bytes (max {MAX_BRIDGED_PAYLOAD})",
                                s.name,
                                msg.name(),
                                msg.encoded_size()
                            ),
                        ));
                    }
                }
                channels.push(ChannelEntry {
                    id: next_channel,
                    subject: ChannelSubject::Service(s.name.clone()),
                    direction: direction(h2f, f2h),
                });
                channel = Some(next_channel);
                next_channel += 1;
            }
        }
        let edges = edges
            .into_iter()
            .map(|(caller, kind)| ServiceEdge {
                caller: caller.to_string(),
                provider: provider.clone().unwrap_or_default(),
                mechanism: match kind {
                    PairKind::HostLocal => ServiceMechanism::HostLocal,
                    PairKind::Intra => ServiceMechanism::IntraCpuDirect,
                    PairKind::Link => ServiceMechanism::LinkBridge {
                        channel: channel.expect("bridged service has a channel"),
                    },
                    PairKind::Shm => ServiceMechanism::ServiceBus {
                        provider: provider.clone().unwrap_or_default(),
                    },
                },
            })
            .collect();
        service_routes.push(ServiceRoute {
            service: s.name.clone(),
            provider,
            channel,
            edges,
        });
    }

    let topics = analysis
        .iter()
        .map(|(name, a)| {
            let shm_address = memory_map.entries.get(*name).map(|e| e.base);
            let channel = topic_channels.get(name).copied();
            TopicRoute {
                topic: name.to_string(),
                shm_address,
                channel,
                edges: a
                    .edges
                    .iter()
                    .map(|e| TopicEdge {
                        publisher: e.publisher.to_string(),
                        subscriber: e.subscriber.to_string(),
                        mechanism: match e.kind {
                            PairKind::HostLocal => TopicMechanism::HostLocal,
                            PairKind::Intra => TopicMechanism::IntraCpuDirect,
                            PairKind::Link => TopicMechanism::LinkBridge {
                                channel: channel.expect("bridged topic has a channel"),
                            },
                            PairKind::Shm => TopicMechanism::SharedMemory {
                                address: shm_address.unwrap_or(u32::MAX),
                            },
                        },
                    })
                    .collect(),
            }
        })
        .collect();

    let cpus: BTreeSet<CpuId> = m
        .placements
        .iter()
        .filter_map(|p| match p.target {
            Target::Softcore(c) => Some(c),
            _ => None,
        })
        .collect();
    let mut schedules = Vec::new();
    for cpu in cpus {
        let (table, d) = synthesize_schedule(m, cpu);
        diags.extend(d);
        schedules.push(table);
    }

    let routing = RoutingTable {
        placements: m
            .placements
            .iter()
            .map(|p| (p.component.clone(), p.target.clone()))
            .collect(),
        topics,
        services: service_routes,
        channels,
    };
    let diagnostics: Vec<Diagnostic> = diags.into_iter().collect();
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(CompileError { diagnostics });
    }
    Ok(DeploymentPlan {
        memory_map,
        schedules,
        routing,
        diagnostics,
    })
}

fn direction(h2f: bool, f2h: bool) -> ChannelDirection {
    match (h2f, f2h) {
        (true, true) => ChannelDirection::Both,
        (true, false) => ChannelDirection::HostToFabric,
        _ => ChannelDirection::FabricToHost,
    }
}
