//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::rc::Rc;

use fabricmigrate_core::manifest::{hyperperiod, DeploymentPlan, Manifest, TopicMechanism};
use fabricmigrate_core::model::{ComponentSpec, Message, Target};
use fabricmigrate_core::runtime::{Behavior, BehaviorRegistry, Context, Output, RuntimeError};
use rand::seq::IndexedRandom;
use rand::Rng;

/// A periodic task for the brute-force scheduler, in abstract ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskDef {
    pub c: u64,
    pub t: u64,
    pub d: u64,
    /// Higher is more urgent.
    pub prio: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Observed {
    pub worst_response: u64,
    pub missed: bool,
    pub completions: u64,
}

/// Tick-by-tick preemptive fixed-priority schedule with synchronous release
/// at 0, over `[0, horizon)`. A job still unfinished at its absolute
/// deadline counts as a miss.
pub fn brute_force(tasks: &[TaskDef], horizon: u64) -> Vec<Observed> {
    let mut pending: Vec<std::collections::VecDeque<(u64, u64)>> = vec![Default::default(); tasks.len()];
    let mut obs = vec![Observed::default(); tasks.len()];
    for tick in 0..horizon {
        for (i, t) in tasks.iter().enumerate() {
            if tick % t.t == 0 {
                pending[i].push_back((tick, t.c));
            }
        }
        for (i, t) in tasks.iter().enumerate() {
            if pending[i].iter().any(|&(r, _)| r + t.d <= tick) {
                obs[i].missed = true;
            }
        }
        let run = (0..tasks.len())
            .filter(|&i| !pending[i].is_empty())
            .max_by_key(|&i| tasks[i].prio);
        if let Some(i) = run {
            let job = pending[i].front_mut().unwrap();
            job.1 -= 1;
            if job.1 == 0 {
                let (release, _) = pending[i].pop_front().unwrap();
                let resp = tick + 1 - release;
                obs[i].worst_response = obs[i].worst_response.max(resp);
                obs[i].completions += 1;
                if resp > tasks[i].d {
                    obs[i].missed = true;
                }
            }
        }
    }
    for (i, t) in tasks.iter().enumerate() {
        if pending[i].iter().any(|&(r, _)| r + t.d <= horizon) {
            obs[i].missed = true;
        }
    }
    obs
}

/// Periods of the randomized task sets, in 100 us ticks (2..20 ms); 30 and 70
/// break harmonicity so rate-monotonic can fail below full utilization.
pub const TASK_PERIODS_TICKS: [u64; 8] = [20, 30, 40, 50, 70, 80, 100, 200];

/// Random task set with `n <= 5` tasks, utilization at most `max_u`,
/// rate-monotonic priorities (ties by index) and implicit deadlines.
pub fn random_task_set(rng: &mut impl Rng, max_u: f64) -> Vec<TaskDef> {
    loop {
        let n = rng.random_range(1..=5);
        let periods: Vec<u64> = (0..n).map(|_| *TASK_PERIODS_TICKS.choose(rng).unwrap()).collect();
        let target = rng.random_range(0.2..=max_u);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut tasks: Vec<TaskDef> = periods
            .iter()
            .zip(&weights)
            .map(|(&t, w)| TaskDef {
                c: ((w / total * target * t as f64).floor() as u64).max(1),
                t,
                d: t,
                prio: 0,
            })
            .collect();
        let u: f64 = tasks.iter().map(|t| t.c as f64 / t.t as f64).sum();
        if u > max_u {
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (tasks[i].t, i));
        for (rank, &i) in order.iter().enumerate() {
            tasks[i].prio = (n - rank) as i64;
        }
        return tasks;
    }
}

pub fn task_set_hyperperiod(tasks: &[TaskDef]) -> u64 {
    hyperperiod(tasks.iter().map(|t| t.t))
}

/// Bitwise CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no
/// final xor.
pub fn crc16_bitwise(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in data {
        for i in (0..8).rev() {
            let bit = (b >> i) & 1 == 1;
            let top = crc & 0x8000 != 0;
            crc <<= 1;
            if bit != top {
                crc ^= 0x1021;
            }
        }
    }
    crc
}

const FIELD_TYPES: [&str; 10] = [
    "bool", "u8", "i16", "u16", "i32", "u32", "f32", "f64", "u64", "f32[3]",
];
const THREAD_PERIODS_US: [u64; 5] = [1000, 2000, 4000, 5000, 10_000];

#[derive(Debug, Clone)]
pub struct ManifestOptions {
    pub max_components: usize,
    pub max_topics: usize,
    pub host_probability: f64,
    pub shm_words: std::ops::RangeInclusive<u32>,
    /// Largest budget as a fraction of the period.
    pub max_budget_fraction: f64,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            max_components: 7,
            max_topics: 6,
            host_probability: 0.25,
            shm_words: 64..=1024,
            max_budget_fraction: 0.3,
        }
    }
}

/// Manifest text with random topics and placements. Every topic has exactly
/// one publisher; all components use the `relay` behavior.
pub fn random_manifest(rng: &mut impl Rng, opts: &ManifestOptions) -> String {
    let fpgas = rng.random_range(1..=2u32);
    let cpus = rng.random_range(1..=3u32);
    let shm = rng.random_range(opts.shm_words.clone());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "fabric {{ fpgas = {fpgas}  cpus_per_fpga = {cpus}  shm_words = {shm}  shm_cycle_us = 100  link_bytes_per_ms = 1000  bus_delay_us = 20 }}"
    );
    let n_topics = rng.random_range(1..=opts.max_topics);
    for t in 0..n_topics {
        let n_fields = rng.random_range(1..=4);
        let fields: Vec<String> = (0..n_fields)
            .map(|f| format!("f{f}: {}", FIELD_TYPES.choose(rng).unwrap()))
            .collect();
        let _ = writeln!(s, "topic \"t{t}\" {{ type T{t} {{ {} }} }}", fields.join("  "));
    }
    let n_comps = rng.random_range(2..=opts.max_components);
    let mut publishes = vec![Vec::new(); n_comps];
    let mut subscribes = vec![Vec::new(); n_comps];
    for t in 0..n_topics {
        let p = rng.random_range(0..n_comps);
        publishes[p].push(t);
        for (c, subs) in subscribes.iter_mut().enumerate() {
            if c != p && rng.random_bool(0.35) {
                subs.push(t);
            }
        }
    }
    for c in 0..n_comps {
        let placement = if rng.random_bool(opts.host_probability) {
            "host".to_string()
        } else {
            format!("softcore {} {}", rng.random_range(0..fpgas), rng.random_range(0..cpus))
        };
        let _ = writeln!(s, "component \"c{c}\" {{\n  placement = {placement}\n  behavior = \"relay\"");
        for th in 0..rng.random_range(1..=2) {
            let period = *THREAD_PERIODS_US.choose(rng).unwrap();
            let max_budget = ((period as f64 * opts.max_budget_fraction) as u64).max(1);
            let budget = rng.random_range(1..=max_budget);
            let _ = writeln!(s, "  thread \"th{th}\" {{ period_us = {period}  budget_us = {budget} }}");
        }
        for t in &publishes[c] {
            let _ = writeln!(s, "  publish \"t{t}\"");
        }
        for t in &subscribes[c] {
            let _ = writeln!(s, "  subscribe \"t{t}\"");
        }
        s.push_str("}\n");
    }
    s
}

pub fn target(m: &Manifest, c: &str) -> Target {
    m.target_of(c).cloned().unwrap_or(Target::Host)
}

/// Mechanism class each connected pair should get, from placements alone.
pub fn expected_class(m: &Manifest, publisher: &str, subscriber: &str) -> &'static str {
    match (target(m, publisher), target(m, subscriber)) {
        (Target::Host, Target::Host) => "host_local",
        (Target::Host, _) | (_, Target::Host) => "link_bridge",
        (Target::Softcore(a), Target::Softcore(b)) if a == b => "intra_cpu_direct",
        _ => "shared_memory",
    }
}

pub fn class_name(m: &TopicMechanism) -> &'static str {
    match m {
        TopicMechanism::IntraCpuDirect => "intra_cpu_direct",
        TopicMechanism::SharedMemory { .. } => "shared_memory",
        TopicMechanism::LinkBridge { .. } => "link_bridge",
        TopicMechanism::HostLocal => "host_local",
    }
}

/// Topics whose value must sit in shared memory: some fabric subscriber is
/// fed by the host or by another fabric node.
pub fn slot_topics(m: &Manifest) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in &m.topics {
        for p in m.components.iter().filter(|c| c.publishes.contains(&t.name)) {
            for s in m.components.iter().filter(|c| c.subscribes.contains(&t.name)) {
                if p.name == s.name || !target(m, &s.name).is_fabric() {
                    continue;
                }
                if expected_class(m, &p.name, &s.name) != "intra_cpu_direct" {
                    out.insert(t.name.clone());
                }
            }
        }
    }
    out
}

/// Topics with a publisher/subscriber pair that gets queued delivery under
/// `before` and last-value delivery under `after`.
pub fn degraded_topics(before: &Manifest, after: &Manifest) -> BTreeSet<String> {
    let queue = |m: &Manifest, p: &str, s: &str| matches!(expected_class(m, p, s), "host_local" | "link_bridge");
    let mut out = BTreeSet::new();
    for t in &after.topics {
        for p in after.components.iter().filter(|c| c.publishes.contains(&t.name)) {
            for s in after.components.iter().filter(|c| c.subscribes.contains(&t.name)) {
                if queue(before, &p.name, &s.name) && !queue(after, &p.name, &s.name) {
                    out.insert(t.name.clone());
                }
            }
        }
    }
    out
}

/// Publishes every declared topic with the activation count in all fields and
/// reads every subscription.
pub struct Relay {
    count: u64,
}

impl Behavior for Relay {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        self.count += 1;
        let spec = ctx.spec().clone();
        for t in &spec.subscribes {
            ctx.latest(t)?;
        }
        for topic in &spec.publishes {
            let ty = ctx.topic_type(topic).expect("declared topic").clone();
            let n = Message::zeroed(&ty).to_f64s().len();
            let v = (self.count % 200) as f64;
            ctx.publish(topic, Message::from_f64s(&ty, &vec![v; n]))?;
        }
        Ok(())
    }
}

pub fn relay_registry() -> BehaviorRegistry {
    let mut r = BehaviorRegistry::new();
    r.register("relay", |_| Box::new(Relay { count: 0 }));
    r
}

/// Hyperperiod of all softcore threads of a manifest.
pub fn fabric_hyperperiod(m: &Manifest) -> u64 {
    hyperperiod(
        m.components
            .iter()
            .filter(|c| matches!(m.target_of(&c.name), Some(Target::Softcore(_))))
            .flat_map(|c| c.threads.iter().map(|t| t.period_us)),
    )
}

pub fn fabric_task_count(plan: &DeploymentPlan) -> usize {
    plan.schedules.iter().map(|s| s.tasks.len()).sum()
}

/// Values published by a wrapped behavior, with the activation time.
pub type Published = Rc<RefCell<Vec<(u64, String, Vec<f64>)>>>;

/// Forwards to `inner` and records every publication of `on_thread`.
pub struct Recorder {
    pub inner: Box<dyn Behavior>,
    pub log: Published,
}

impl Behavior for Recorder {
    fn on_thread(&mut self, ctx: &mut Context<'_>, thread: &str) -> Result<(), RuntimeError> {
        self.inner.on_thread(ctx, thread)?;
        let now = ctx.now_us();
        for o in ctx.outputs() {
            if let Output::Publish { topic, msg } = o {
                self.log.borrow_mut().push((now, topic.clone(), msg.to_f64s()));
            }
        }
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Context<'_>, topic: &str, msg: &Message) -> Result<(), RuntimeError> {
        self.inner.on_message(ctx, topic, msg)
    }
}

/// Registry where behavior `id` of `base` is wrapped in a [`Recorder`].
pub fn recording(base: BehaviorRegistry, ids: &[&str], log: &Published) -> BehaviorRegistry {
    let base = Rc::new(base);
    let mut r = BehaviorRegistry::new();
    for id in base.ids().map(str::to_string).collect::<Vec<_>>() {
        let b = base.clone();
        if ids.contains(&id.as_str()) {
            let log = log.clone();
            r.register(id, move |spec: &ComponentSpec| {
                Box::new(Recorder {
                    inner: b.instantiate(spec).expect("registered"),
                    log: log.clone(),
                })
            });
        } else {
            r.register(id, move |spec: &ComponentSpec| b.instantiate(spec).expect("registered"));
        }
    }
    r
}
