//! Executes a compiled deployment: host threads, softcore executors,
//! gateware blocks, the shared-memory network, the service bus and the host
//! bridge, all driven by one discrete-event engine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::debug;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::details;
use crate::fabric::{
    BusError, ExecEvent, JobId, Node, ServiceBus, SharedMemoryNetwork, ShmError,
    SoftcoreExecutor, TaskStats,
};
use crate::link::{Bridge, FrameKind, LinkError, Side};
use crate::manifest::{
    ChannelSubject, DeploymentPlan, Manifest, ServiceMechanism, TopicMechanism,
};
use crate::model::{ComponentSpec, CpuId, Message, MessageType, ServiceSpec, Target};
use crate::sim::{rng_stream, Engine, SimError, Trace, TraceKind, DEFAULT_LIVELOCK_LIMIT};

use super::behavior::{Behavior, BehaviorRegistry, Context, Output, RuntimeError, ServiceOutcome};
use super::host::{HostActivation, HostRelease, HostThread, JitterModel};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Shm(#[from] ShmError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("message codec: {0}")]
    Codec(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Mixed into the host jitter seed and the link corruption stream.
    pub seed: u64,
    /// Replaces the manifest's host jitter model.
    pub jitter: Option<JitterModel>,
    pub record_trace: bool,
    pub livelock_limit: u64,
    /// Service timeout in caller periods.
    pub service_timeout_periods: u64,
    /// Probability that a link frame has one bit flipped in transit.
    pub link_corruption: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            seed: 0,
            jitter: None,
            record_trace: true,
            livelock_limit: DEFAULT_LIVELOCK_LIMIT,
            service_timeout_periods: 10,
            link_corruption: 0.0,
        }
    }
}

/// Execution domain of a task, as reported in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Domain {
    Host,
    Fabric,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Host => "host",
            Domain::Fabric => "fabric",
        }
    }
}

#[derive(Debug)]
enum Ev {
    Init,
    HostRelease(usize),
    HostStart(usize, HostActivation),
    HostComplete(usize),
    CpuWake(CpuId),
    ShmApply,
    LinkArrive(u64),
    BusArrive,
    CallTimeout(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reply {
    HostLocal,
    Bus,
    Link,
}

#[derive(Debug, Clone)]
struct Request {
    call: u64,
    service: String,
    msg: Message,
    reply: Reply,
}

#[derive(Debug)]
struct CallState {
    caller: usize,
    provider: usize,
    service: String,
    done: bool,
}

#[derive(Debug, Clone, Copy)]
enum FlightMeta {
    Topic,
    Request(u64),
    Response(u64),
}

#[derive(Debug)]
struct Flight {
    to: Side,
    bytes: Vec<u8>,
    clean: Vec<u8>,
    delay_us: u64,
    meta: FlightMeta,
    attempt: u32,
}

#[derive(Debug, Default)]
struct Staged {
    outputs: Vec<Output>,
    replies: Vec<(Request, Message)>,
}

#[derive(Debug, Default, Clone)]
struct PublishRoute {
    host_queues: Vec<usize>,
    cell: Option<CpuId>,
    slot: bool,
    link_to: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Source {
    HostLatest,
    Cell(CpuId),
    Slot(Node),
}

struct Comp {
    spec: ComponentSpec,
    target: Target,
    behavior: Box<dyn Behavior>,
    queue: VecDeque<(String, Message)>,
    host_latest: BTreeMap<String, (u64, Message)>,
    requests: VecDeque<Request>,
    responses: VecDeque<(String, ServiceOutcome)>,
}

struct HostSlot {
    thread: HostThread,
    comp: usize,
    pending: VecDeque<(HostActivation, Staged)>,
}

struct Cpu {
    exec: SoftcoreExecutor,
    /// Component index of each task.
    task_comp: Vec<usize>,
}

/// Runs one deployment plan.
pub struct System {
    engine: Engine<Ev>,
    config: SystemConfig,
    topic_types: BTreeMap<String, MessageType>,
    services: BTreeMap<String, ServiceSpec>,
    comps: Vec<Comp>,
    comp_index: BTreeMap<String, usize>,
    hosts: Vec<HostSlot>,
    cpus: BTreeMap<CpuId, Cpu>,
    staged: BTreeMap<(CpuId, JobId), Staged>,
    wakes: BTreeSet<(CpuId, u64)>,
    kicks: BTreeSet<CpuId>,
    cells: BTreeMap<(CpuId, String), (u64, Message)>,
    shm: SharedMemoryNetwork,
    shm_events: BTreeSet<u64>,
    bus: ServiceBus,
    bus_events: BTreeSet<u64>,
    bridge: Bridge,
    flights: BTreeMap<u64, Flight>,
    next_flight: u64,
    calls: BTreeMap<u64, CallState>,
    next_call: u64,
    publish_routes: BTreeMap<(usize, String), PublishRoute>,
    sources: BTreeMap<(usize, String), Vec<Source>>,
    gateware_inputs: BTreeMap<String, Vec<usize>>,
    link_host_subs: BTreeMap<String, Vec<usize>>,
    service_edges: BTreeMap<(usize, String), (usize, ServiceMechanism)>,
    corruption_rng: ChaCha8Rng,
    trace: Trace,
}

fn node_of(target: &Target, name: &str) -> Option<Node> {
    match target {
        Target::Host => None,
        Target::Softcore(c) => Some(Node::Cpu(*c)),
        Target::Gateware(_) => Some(Node::Gateware(name.to_string())),
    }
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl System {
    pub fn new(
        manifest: &Manifest,
        plan: &DeploymentPlan,
        registry: &BehaviorRegistry,
        config: SystemConfig,
    ) -> Result<System, SystemError> {
        let topic_types: BTreeMap<String, MessageType> = manifest
            .topics
            .iter()
            .map(|t| (t.name.clone(), t.ty.clone()))
            .collect();
        let services: BTreeMap<String, ServiceSpec> = manifest
            .services
            .iter()
            .map(|s| (s.name.clone(), s.clone()))
            .collect();

        let mut specs: Vec<&ComponentSpec> = manifest.components.iter().collect();
        specs.sort_by(|a, b| a.name.cmp(&b.name));
        let mut comps = Vec::new();
        let mut comp_index = BTreeMap::new();
        for spec in specs {
            let target = plan
                .routing
                .placements
                .get(&spec.name)
                .cloned()
                .unwrap_or(Target::Host);
            comp_index.insert(spec.name.clone(), comps.len());
            comps.push(Comp {
                spec: spec.clone(),
                target,
                behavior: registry.instantiate(spec)?,
                queue: VecDeque::new(),
                host_latest: BTreeMap::new(),
                requests: VecDeque::new(),
                responses: VecDeque::new(),
            });
        }

        // Jitter streams are numbered over all threads of all components so a
        // host thread keeps its stream when other components move.
        let base_jitter = config.jitter.clone().unwrap_or(manifest.host.jitter.clone());
        let jitter = JitterModel {
            rng_seed: mix_seed(base_jitter.rng_seed, config.seed),
            ..base_jitter
        };
        let mut hosts = Vec::new();
        let mut stream = 0u64;
        for (ci, c) in comps.iter().enumerate() {
            for t in &c.spec.threads {
                if c.target == Target::Host {
                    hosts.push(HostSlot {
                        thread: HostThread::new(&c.spec.name, t.clone(), jitter.clone(), stream),
                        comp: ci,
                        pending: VecDeque::new(),
                    });
                }
                stream += 1;
            }
        }

        let mut cpus = BTreeMap::new();
        for table in &plan.schedules {
            let exec = SoftcoreExecutor::new(table);
            let task_comp = table
                .tasks
                .iter()
                .map(|t| comp_index[&t.component])
                .collect();
            cpus.insert(table.cpu, Cpu { exec, task_comp });
        }

        let mut nodes: BTreeSet<Node> = comps
            .iter()
            .filter_map(|c| node_of(&c.target, &c.spec.name))
            .collect();
        nodes.insert(Node::Link);
        let mut owners = BTreeMap::new();
        let mut publish_routes: BTreeMap<(usize, String), PublishRoute> = BTreeMap::new();
        let mut sources: BTreeMap<(usize, String), BTreeSet<Source>> = BTreeMap::new();
        let mut gateware_inputs: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        let mut link_host_subs: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for route in &plan.routing.topics {
            for e in &route.edges {
                let p = comp_index[&e.publisher];
                let s = comp_index[&e.subscriber];
                let pt = comps[p].target.clone();
                let st = comps[s].target.clone();
                let r = publish_routes.entry((p, route.topic.clone())).or_default();
                let sub_node = node_of(&st, &e.subscriber);
                match e.mechanism {
                    TopicMechanism::HostLocal => {
                        r.host_queues.push(s);
                        sources.entry((s, route.topic.clone())).or_default().insert(Source::HostLatest);
                    }
                    TopicMechanism::IntraCpuDirect => {
                        if let Target::Softcore(cpu) = pt {
                            r.cell = Some(cpu);
                            sources
                                .entry((s, route.topic.clone()))
                                .or_default()
                                .insert(Source::Cell(cpu));
                        }
                    }
                    TopicMechanism::SharedMemory { .. } => {
                        r.slot = true;
                        owners.insert(
                            route.topic.clone(),
                            node_of(&pt, &e.publisher).expect("fabric publisher"),
                        );
                        let n = sub_node.expect("fabric subscriber");
                        if matches!(n, Node::Gateware(_)) {
                            gateware_inputs.entry(route.topic.clone()).or_default().insert(s);
                        }
                        sources.entry((s, route.topic.clone())).or_default().insert(Source::Slot(n));
                    }
                    TopicMechanism::LinkBridge { .. } => {
                        if pt == Target::Host {
                            r.link_to = Some(Side::Fabric);
                            owners.insert(route.topic.clone(), Node::Link);
                            let n = sub_node.expect("fabric subscriber");
                            if matches!(n, Node::Gateware(_)) {
                                gateware_inputs.entry(route.topic.clone()).or_default().insert(s);
                            }
                            sources.entry((s, route.topic.clone())).or_default().insert(Source::Slot(n));
                        } else {
                            r.link_to = Some(Side::Host);
                            link_host_subs.entry(route.topic.clone()).or_default().insert(s);
                            sources.entry((s, route.topic.clone())).or_default().insert(Source::HostLatest);
                        }
                    }
                }
            }
        }
        for r in publish_routes.values_mut() {
            r.host_queues.sort();
            r.host_queues.dedup();
        }

        let mut bus = ServiceBus::new(manifest.fabric.bus_delay_us);
        let mut service_edges = BTreeMap::new();
        for route in &plan.routing.services {
            for e in &route.edges {
                let c = comp_index[&e.caller];
                let p = comp_index[&e.provider];
                if matches!(e.mechanism, ServiceMechanism::ServiceBus { .. }) {
                    bus.wire(&e.caller, &e.provider);
                }
                service_edges.insert((c, route.service.clone()), (p, e.mechanism.clone()));
            }
        }

        let shm = SharedMemoryNetwork::new(
            &plan.memory_map,
            manifest.fabric.shm_cycle_us,
            nodes,
            owners,
        );
        let bridge = Bridge::new(&plan.routing, manifest.fabric.link_baud_bytes_per_ms);

        let mut engine = Engine::new().with_livelock_limit(config.livelock_limit);
        engine.schedule(0, Ev::Init)?;
        for (i, _) in hosts.iter().enumerate() {
            engine.schedule(0, Ev::HostRelease(i))?;
        }
        let mut wakes = BTreeSet::new();
        for cpu in cpus.keys() {
            engine.schedule(0, Ev::CpuWake(*cpu))?;
            wakes.insert((*cpu, 0));
        }

        Ok(System {
            engine,
            corruption_rng: rng_stream(config.seed, 0x4c494e4b),
            config,
            topic_types,
            services,
            comps,
            comp_index,
            hosts,
            cpus,
            staged: BTreeMap::new(),
            wakes,
            kicks: BTreeSet::new(),
            cells: BTreeMap::new(),
            shm,
            shm_events: BTreeSet::new(),
            bus,
            bus_events: BTreeSet::new(),
            bridge,
            flights: BTreeMap::new(),
            next_flight: 0,
            calls: BTreeMap::new(),
            next_call: 0,
            publish_routes,
            sources: sources
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            gateware_inputs: gateware_inputs
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            link_host_subs: link_host_subs
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            service_edges,
            trace: Trace::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.engine.now()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Trace {
        std::mem::take(&mut self.trace)
    }

    pub fn shared_memory(&self) -> &SharedMemoryNetwork {
        &self.shm
    }

    pub fn bridge(&self) -> &Bridge {
        &self.bridge
    }

    pub fn events_executed(&self) -> u64 {
        self.engine.executed()
    }

    /// Per-task statistics keyed by `component.thread`.
    pub fn task_stats(&self) -> BTreeMap<String, (Domain, TaskStats)> {
        let mut out = BTreeMap::new();
        for h in &self.hosts {
            out.insert(h.thread.key(), (Domain::Host, h.thread.stats()));
        }
        for cpu in self.cpus.values() {
            for i in 0..cpu.exec.task_count() {
                let t = cpu.exec.task(i);
                out.insert(t.key(), (Domain::Fabric, cpu.exec.stats(i)));
            }
        }
        out
    }

    /// Runs every event up to and including `t_end_us`.
    pub fn run_until(&mut self, t_end_us: u64) -> Result<(), SystemError> {
        while let Some((_, ev)) = self.engine.pop_until(t_end_us)? {
            self.handle(ev)?;
        }
        self.engine.advance_to(t_end_us);
        Ok(())
    }

    fn record(&mut self, kind: TraceKind, source: &str, details: Vec<(String, crate::sim::Value)>) {
        if self.config.record_trace {
            let now = self.engine.now();
            self.trace.push(now, kind, source, details);
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SystemError> {
        let now = self.engine.now();
        self.apply_shm(now)?;
        self.deliver_bus(now)?;
        match ev {
            Ev::Init => {
                for ci in 0..self.comps.len() {
                    let (_, staged) = self.invoke(ci, |b, ctx| b.on_init(ctx))?;
                    self.release(ci, staged)?;
                }
            }
            Ev::HostRelease(h) => {
                let key = self.hosts[h].thread.key();
                match self.hosts[h].thread.release() {
                    HostRelease::Activated(a) => {
                        self.record(
                            TraceKind::TaskRelease,
                            &key,
                            details![("domain", "host"), ("start_us", a.start_us)],
                        );
                        self.engine.schedule(a.start_us, Ev::HostStart(h, a))?;
                    }
                    HostRelease::Skipped { release_us } => {
                        self.record(
                            TraceKind::TaskRelease,
                            &key,
                            details![("domain", "host"), ("skipped", true)],
                        );
                        self.record(
                            TraceKind::DeadlineMiss,
                            &key,
                            details![
                                ("domain", "host"),
                                ("release_us", release_us),
                                ("deadline_us", self.hosts[h].thread.spec.deadline_us)
                            ],
                        );
                    }
                }
                let next = self.hosts[h].thread.next_release_us();
                self.engine.schedule(next, Ev::HostRelease(h))?;
            }
            Ev::HostStart(h, a) => {
                self.flush_host(h, now)?;
                let ci = self.hosts[h].comp;
                let thread = self.hosts[h].thread.spec.name.clone();
                let staged = self.host_activation(ci, &thread)?;
                self.hosts[h].pending.push_back((a, staged));
                self.engine.schedule(a.finish_us, Ev::HostComplete(h))?;
            }
            Ev::HostComplete(h) => self.flush_host(h, now)?,
            Ev::CpuWake(cpu) => {
                self.wakes.remove(&(cpu, now));
                self.kicks.insert(cpu);
            }
            Ev::ShmApply => {
                self.shm_events.remove(&now);
            }
            Ev::LinkArrive(id) => self.link_arrive(id)?,
            Ev::BusArrive => {
                self.bus_events.remove(&now);
            }
            Ev::CallTimeout(call) => {
                let st = self.calls.get_mut(&call).expect("known call");
                if !st.done {
                    st.done = true;
                    let (caller, service) = (st.caller, st.service.clone());
                    self.comps[caller]
                        .responses
                        .push_back((service.clone(), ServiceOutcome::Timeout));
                    let name = self.comps[caller].spec.name.clone();
                    self.record(
                        TraceKind::ServiceTimeout,
                        &name,
                        details![("service", service), ("call", call)],
                    );
                }
            }
        }
        while let Some(cpu) = self.kicks.pop_first() {
            self.dispatch_cpu(cpu, now)?;
        }
        Ok(())
    }

    /// Bus transfers due by `now` land before anything else at that instant,
    /// so a job starting at the arrival time sees the request.
    fn deliver_bus(&mut self, now: u64) -> Result<(), SystemError> {
        for t in self.bus.deliver_due(now) {
            let call = t.tag / 2;
            let service = self.calls[&call].service.clone();
            if t.tag % 2 == 0 {
                let ty = self.services[&service].request.clone();
                let msg = Message::decode(&ty, &t.payload)?;
                self.request_arrived(call, msg, Reply::Bus)?;
            } else {
                let ty = self.services[&service].response.clone();
                let msg = Message::decode(&ty, &t.payload)?;
                self.response_arrived(call, msg);
            }
        }
        Ok(())
    }

    fn apply_shm(&mut self, now: u64) -> Result<(), SystemError> {
        for cycle in self.shm.advance_to(now) {
            self.record(
                TraceKind::ShmCycle,
                "shm",
                details![("topics", cycle.topics.join("|"))],
            );
            let mut triggered = BTreeSet::new();
            for topic in &cycle.topics {
                if let Some(gs) = self.gateware_inputs.get(topic) {
                    triggered.extend(gs.iter().copied());
                }
            }
            for ci in triggered {
                let thread = self.comps[ci].spec.threads[0].name.clone();
                let (_, staged) = self.invoke(ci, |b, ctx| b.on_thread(ctx, &thread))?;
                self.release(ci, staged)?;
            }
        }
        Ok(())
    }

    /// Latest visible value of each subscribed topic of component `ci`.
    fn inputs(&self, ci: usize) -> Result<BTreeMap<String, Message>, SystemError> {
        let mut out = BTreeMap::new();
        let c = &self.comps[ci];
        for topic in &c.spec.subscribes {
            let Some(srcs) = self.sources.get(&(ci, topic.clone())) else {
                continue;
            };
            let ty = &self.topic_types[topic];
            let mut best: Option<(u64, Message)> = None;
            for s in srcs {
                let cand = match s {
                    Source::HostLatest => c.host_latest.get(topic).cloned(),
                    Source::Cell(cpu) => self.cells.get(&(*cpu, topic.clone())).cloned(),
                    Source::Slot(node) => {
                        let r = self.shm.read(node, topic)?;
                        match r.written_at_us {
                            Some(t) => Some((t, Message::from_words(ty, r.words)?)),
                            None => None,
                        }
                    }
                };
                if let Some((t, m)) = cand {
                    if best.as_ref().is_none_or(|(bt, _)| t >= *bt) {
                        best = Some((t, m));
                    }
                }
            }
            if let Some((_, m)) = best {
                out.insert(topic.clone(), m);
            }
        }
        Ok(out)
    }

    /// Runs one callback of component `ci` with a fresh context.
    fn invoke<R>(
        &mut self,
        ci: usize,
        f: impl FnOnce(&mut dyn Behavior, &mut Context<'_>) -> Result<R, RuntimeError>,
    ) -> Result<(R, Staged), SystemError> {
        let inputs = self.inputs(ci)?;
        let now = self.engine.now();
        let c = &mut self.comps[ci];
        let mut ctx = Context::new(&c.spec, &self.topic_types, &self.services, now, inputs);
        let r = f(c.behavior.as_mut(), &mut ctx)?;
        Ok((
            r,
            Staged {
                outputs: ctx.into_outputs(),
                replies: Vec::new(),
            },
        ))
    }

    /// Host activation: pending requests, responses and queued messages are
    /// handled before the thread body.
    fn host_activation(&mut self, ci: usize, thread: &str) -> Result<Staged, SystemError> {
        let requests: Vec<Request> = self.comps[ci].requests.drain(..).collect();
        let responses: Vec<(String, ServiceOutcome)> = self.comps[ci].responses.drain(..).collect();
        let messages: Vec<(String, Message)> = self.comps[ci].queue.drain(..).collect();
        let name = self.comps[ci].spec.name.clone();
        for (topic, _) in &messages {
            self.record(TraceKind::Deliver, &name, details![("topic", topic.as_str())]);
        }
        let thread = thread.to_string();
        let (replies, mut staged) = self.invoke(ci, |b, ctx| {
            let mut replies = Vec::new();
            for req in requests {
                let resp = b.on_service(ctx, &req.service, &req.msg)?;
                replies.push((req, resp));
            }
            for (service, outcome) in &responses {
                b.on_response(ctx, service, outcome)?;
            }
            for (topic, msg) in &messages {
                b.on_message(ctx, topic, msg)?;
            }
            b.on_thread(ctx, &thread)?;
            Ok(replies)
        })?;
        staged.replies = replies;
        Ok(staged)
    }

    fn flush_host(&mut self, h: usize, now: u64) -> Result<(), SystemError> {
        while self.hosts[h].pending.front().is_some_and(|(a, _)| a.finish_us <= now) {
            let (a, staged) = self.hosts[h].pending.pop_front().expect("front exists");
            let missed = self.hosts[h].thread.complete(&a);
            let key = self.hosts[h].thread.key();
            let ci = self.hosts[h].comp;
            self.release(ci, staged)?;
            self.record(
                TraceKind::TaskComplete,
                &key,
                details![
                    ("domain", "host"),
                    ("release_us", a.release_us),
                    ("response_us", a.response_us()),
                    ("missed", missed)
                ],
            );
            if missed {
                self.record(
                    TraceKind::DeadlineMiss,
                    &key,
                    details![
                        ("domain", "host"),
                        ("release_us", a.release_us),
                        ("deadline_us", self.hosts[h].thread.spec.deadline_us)
                    ],
                );
            }
        }
        Ok(())
    }

    fn dispatch_cpu(&mut self, cpu: CpuId, now: u64) -> Result<(), SystemError> {
        let d = self.cpus.get_mut(&cpu).expect("known cpu").exec.dispatch(now);
        let cpu_label = format!("cpu{cpu}");
        for e in d.events {
            match e {
                ExecEvent::Released(job) => {
                    let key = self.cpus[&cpu].exec.task(job.task).key();
                    self.record(
                        TraceKind::TaskRelease,
                        &key,
                        details![("domain", "fabric"), ("cpu", cpu_label.as_str())],
                    );
                }
                ExecEvent::Started(job) => {
                    let ci = self.cpus[&cpu].task_comp[job.task];
                    let comp = self.comps[ci].spec.name.clone();
                    let handles = self.cpus[&cpu].exec.handler_task(&comp) == Some(job.task);
                    let requests: Vec<Request> = if handles {
                        self.comps[ci].requests.drain(..).collect()
                    } else {
                        Vec::new()
                    };
                    let thread = self.cpus[&cpu].exec.task(job.task).thread.clone();
                    let responses: Vec<(String, ServiceOutcome)> = self.comps[ci].responses.drain(..).collect();
                    let (replies, mut staged) = self.invoke(ci, |b, ctx| {
                        let mut replies = Vec::new();
                        for req in requests {
                            let resp = b.on_service(ctx, &req.service, &req.msg)?;
                            replies.push((req, resp));
                        }
                        for (service, outcome) in &responses {
                            b.on_response(ctx, service, outcome)?;
                        }
                        b.on_thread(ctx, &thread)?;
                        Ok(replies)
                    })?;
                    staged.replies = replies;
                    self.staged.insert((cpu, job), staged);
                }
                ExecEvent::Completed {
                    job,
                    completion_us,
                    missed,
                } => {
                    let ci = self.cpus[&cpu].task_comp[job.task];
                    let key = self.cpus[&cpu].exec.task(job.task).key();
                    if let Some(staged) = self.staged.remove(&(cpu, job)) {
                        self.release(ci, staged)?;
                    }
                    self.record(
                        TraceKind::TaskComplete,
                        &key,
                        details![
                            ("domain", "fabric"),
                            ("cpu", cpu_label.as_str()),
                            ("release_us", job.release_us),
                            ("response_us", completion_us - job.release_us),
                            ("missed", missed)
                        ],
                    );
                }
                ExecEvent::DeadlineMiss {
                    job,
                    deadline_at_us,
                } => {
                    let key = self.cpus[&cpu].exec.task(job.task).key();
                    debug!("deadline miss on cpu {cpu}: {key} released at {}", job.release_us);
                    self.record(
                        TraceKind::DeadlineMiss,
                        &key,
                        details![
                            ("domain", "fabric"),
                            ("cpu", cpu_label.as_str()),
                            ("release_us", job.release_us),
                            ("deadline_at_us", deadline_at_us)
                        ],
                    );
                }
            }
        }
        if let Some(next) = d.next_us {
            if self.wakes.insert((cpu, next)) {
                self.engine.schedule(next, Ev::CpuWake(cpu))?;
            }
        }
        Ok(())
    }

    /// Makes the outputs of a finished job (or a zero-time reaction) visible.
    fn release(&mut self, ci: usize, staged: Staged) -> Result<(), SystemError> {
        let now = self.engine.now();
        let name = self.comps[ci].spec.name.clone();
        for out in staged.outputs {
            match out {
                Output::Publish { topic, msg } => self.publish(ci, &name, topic, msg, now)?,
                Output::Call { service, request } => self.call(ci, &name, service, request, now)?,
            }
        }
        for (req, resp) in staged.replies {
            self.reply(ci, req, resp, now)?;
        }
        Ok(())
    }

    fn publish(
        &mut self,
        ci: usize,
        name: &str,
        topic: String,
        msg: Message,
        now: u64,
    ) -> Result<(), SystemError> {
        self.record(TraceKind::Publish, name, details![("topic", topic.as_str())]);
        let Some(route) = self.publish_routes.get(&(ci, topic.clone())).cloned() else {
            return Ok(());
        };
        for s in route.host_queues {
            self.host_enqueue(s, &topic, &msg, now);
        }
        if let Some(cpu) = route.cell {
            self.cells.insert((cpu, topic.clone()), (now, msg.clone()));
        }
        let ty = self.topic_types[&topic].clone();
        if route.slot {
            let node = node_of(&self.comps[ci].target, name).expect("fabric publisher");
            let words = msg.to_words(&ty)?;
            self.shm_write(&node, &topic, &words, now)?;
        }
        if let Some(to) = route.link_to {
            let payload = msg.encode(&ty)?;
            let tx = self.bridge.send_on(
                to.opposite(),
                &ChannelSubject::Topic(topic.clone()),
                FrameKind::TopicData,
                payload,
            )?;
            self.launch(to, tx.bytes, tx.delay_us, FlightMeta::Topic, 0, name, &topic)?;
        }
        Ok(())
    }

    fn host_enqueue(&mut self, s: usize, topic: &str, msg: &Message, now: u64) {
        let c = &mut self.comps[s];
        c.queue.push_back((topic.to_string(), msg.clone()));
        c.host_latest.insert(topic.to_string(), (now, msg.clone()));
    }

    fn shm_write(&mut self, node: &Node, topic: &str, words: &[u32], now: u64) -> Result<(), SystemError> {
        let at = self.shm.write(node, topic, words, now)?;
        if self.shm_events.insert(at) {
            self.engine.schedule(at, Ev::ShmApply)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn launch(
        &mut self,
        to: Side,
        clean: Vec<u8>,
        delay_us: u64,
        meta: FlightMeta,
        attempt: u32,
        source: &str,
        subject: &str,
    ) -> Result<(), SystemError> {
        let mut bytes = clean.clone();
        if self.config.link_corruption > 0.0
            && self.corruption_rng.random::<f64>() < self.config.link_corruption
        {
            let bit = self.corruption_rng.random_range(0..bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
        }
        let id = self.next_flight;
        self.next_flight += 1;
        let now = self.engine.now();
        self.record(
            TraceKind::BridgeTx,
            source,
            details![
                ("to", to.to_string()),
                ("subject", subject),
                ("bytes", bytes.len()),
                ("arrive_us", now + delay_us),
                ("attempt", attempt)
            ],
        );
        self.flights.insert(
            id,
            Flight {
                to,
                bytes,
                clean,
                delay_us,
                meta,
                attempt,
            },
        );
        self.engine.schedule(now + delay_us, Ev::LinkArrive(id))?;
        Ok(())
    }

    fn link_arrive(&mut self, id: u64) -> Result<(), SystemError> {
        let f = self.flights.remove(&id).expect("flight in the air");
        let now = self.engine.now();
        let rx = self.bridge.receive(&f.bytes);
        if !rx.errors.is_empty() {
            let msg = rx.errors.join("|");
            self.record(
                TraceKind::BridgeError,
                "link",
                details![("to", f.to.to_string()), ("error", msg.replace([';', '=', ','], " "))],
            );
        }
        if rx.frames.is_empty() {
            if !matches!(f.meta, FlightMeta::Topic) && f.attempt == 0 {
                self.launch(f.to, f.clean, f.delay_us, f.meta, 1, "link", "retry")?;
            }
            return Ok(());
        }
        for (frame, subject) in rx.frames {
            match (subject, f.meta) {
                (ChannelSubject::Topic(topic), _) => {
                    let ty = self.topic_types[&topic].clone();
                    let msg = Message::decode(&ty, &frame.payload)?;
                    self.record(
                        TraceKind::Deliver,
                        "link",
                        details![("topic", topic.as_str()), ("to", f.to.to_string())],
                    );
                    match f.to {
                        Side::Fabric => {
                            let words = msg.to_words(&ty)?;
                            self.shm_write(&Node::Link, &topic, &words, now)?;
                        }
                        Side::Host => {
                            let subs = self.link_host_subs.get(&topic).cloned().unwrap_or_default();
                            for s in subs {
                                self.host_enqueue(s, &topic, &msg, now);
                            }
                        }
                    }
                }
                (ChannelSubject::Service(service), FlightMeta::Request(call)) => {
                    let ty = self.services[&service].request.clone();
                    let msg = Message::decode(&ty, &frame.payload)?;
                    self.request_arrived(call, msg, Reply::Link)?;
                }
                (ChannelSubject::Service(service), FlightMeta::Response(call)) => {
                    let ty = self.services[&service].response.clone();
                    let msg = Message::decode(&ty, &frame.payload)?;
                    self.response_arrived(call, msg);
                }
                (ChannelSubject::Service(_), FlightMeta::Topic) => {
                    unreachable!("topic flights carry topic channels")
                }
            }
        }
        Ok(())
    }

    fn call(
        &mut self,
        ci: usize,
        name: &str,
        service: String,
        request: Message,
        now: u64,
    ) -> Result<(), SystemError> {
        let Some((provider, mechanism)) = self.service_edges.get(&(ci, service.clone())).cloned()
        else {
            return Err(RuntimeError::NoProvider(service).into());
        };
        let call = self.next_call;
        self.next_call += 1;
        self.calls.insert(
            call,
            CallState {
                caller: ci,
                provider,
                service: service.clone(),
                done: false,
            },
        );
        let period = self.comps[ci]
            .spec
            .threads
            .iter()
            .map(|t| t.period_us)
            .min()
            .unwrap_or(1);
        self.engine.schedule(
            now + self.config.service_timeout_periods * period,
            Ev::CallTimeout(call),
        )?;
        let req = Request {
            call,
            service: service.clone(),
            msg: request,
            reply: Reply::HostLocal,
        };
        match mechanism {
            ServiceMechanism::IntraCpuDirect => {
                let (resp, staged) =
                    self.invoke(provider, |b, ctx| b.on_service(ctx, &req.service, &req.msg))?;
                self.release(provider, staged)?;
                self.response_arrived(call, resp);
            }
            ServiceMechanism::HostLocal => {
                self.comps[provider].requests.push_back(req);
            }
            ServiceMechanism::ServiceBus { .. } => {
                let ty = &self.services[&service].request;
                let payload = req.msg.encode(ty)?;
                let pname = self.comps[provider].spec.name.clone();
                let ready = self.bus.transfer(name, &pname, payload, call * 2, now)?;
                self.record(
                    TraceKind::BusTransfer,
                    name,
                    details![("dst", pname), ("service", service.as_str()), ("ready_us", ready)],
                );
                if self.bus_events.insert(ready) {
                    self.engine.schedule(ready, Ev::BusArrive)?;
                }
            }
            ServiceMechanism::LinkBridge { .. } => {
                let ty = &self.services[&service].request;
                let payload = req.msg.encode(ty)?;
                let from = if self.comps[ci].target == Target::Host {
                    Side::Host
                } else {
                    Side::Fabric
                };
                let tx = self.bridge.send_on(
                    from,
                    &ChannelSubject::Service(service.clone()),
                    FrameKind::ServiceRequest,
                    payload,
                )?;
                self.launch(
                    from.opposite(),
                    tx.bytes,
                    tx.delay_us,
                    FlightMeta::Request(call),
                    0,
                    name,
                    &service,
                )?;
            }
        }
        Ok(())
    }

    fn request_arrived(&mut self, call: u64, msg: Message, reply: Reply) -> Result<(), SystemError> {
        let st = &self.calls[&call];
        let provider = st.provider;
        let req = Request {
            call,
            service: st.service.clone(),
            msg,
            reply,
        };
        // Handled at the provider's next activation of its highest-priority
        // thread, inside that thread's budget.
        self.comps[provider].requests.push_back(req);
        Ok(())
    }

    fn reply(&mut self, provider: usize, req: Request, resp: Message, now: u64) -> Result<(), SystemError> {
        let st = &self.calls[&req.call];
        let caller = st.caller;
        match req.reply {
            Reply::HostLocal => self.response_arrived(req.call, resp),
            Reply::Bus => {
                let ty = &self.services[&req.service].response;
                let payload = resp.encode(ty)?;
                let src = self.comps[provider].spec.name.clone();
                let dst = self.comps[caller].spec.name.clone();
                let ready = self.bus.transfer(&src, &dst, payload, req.call * 2 + 1, now)?;
                self.record(
                    TraceKind::BusTransfer,
                    &src,
                    details![("dst", dst), ("service", req.service.as_str()), ("ready_us", ready)],
                );
                if self.bus_events.insert(ready) {
                    self.engine.schedule(ready, Ev::BusArrive)?;
                }
            }
            Reply::Link => {
                let ty = &self.services[&req.service].response;
                let payload = resp.encode(ty)?;
                let from = if self.comps[provider].target == Target::Host {
                    Side::Host
                } else {
                    Side::Fabric
                };
                let tx = self.bridge.send_on(
                    from,
                    &ChannelSubject::Service(req.service.clone()),
                    FrameKind::ServiceResponse,
                    payload,
                )?;
                let src = self.comps[provider].spec.name.clone();
                self.launch(
                    from.opposite(),
                    tx.bytes,
                    tx.delay_us,
                    FlightMeta::Response(req.call),
                    0,
                    &src,
                    &req.service,
                )?;
            }
        }
        Ok(())
    }

    fn response_arrived(&mut self, call: u64, resp: Message) {
        let st = self.calls.get_mut(&call).expect("known call");
        if st.done {
            return;
        }
        st.done = true;
        let (caller, service) = (st.caller, st.service.clone());
        self.comps[caller]
            .responses
            .push_back((service.clone(), ServiceOutcome::Response(resp)));
        let name = self.comps[caller].spec.name.clone();
        self.record(
            TraceKind::Deliver,
            &name,
            details![("service", service), ("call", call)],
        );
    }

    /// Index of a component by name.
    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.comp_index.get(name).copied()
    }
}
