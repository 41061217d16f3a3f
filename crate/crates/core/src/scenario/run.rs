use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::Rc;

use thiserror::Error;

use crate::details;
use crate::fabric::{deadline_report, DeadlineReport};
use crate::manifest::{compile_plan, CompileError, DeploymentPlan, Manifest};
use crate::runtime::{System, SystemConfig, SystemError};
use crate::sim::{Trace, TraceKind};

use super::behaviors::robot_registry;
use super::config::ScenarioConfig;
use super::plant::{Plant, PlantState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Outcome of one run, as written to the summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub seed: u64,
    pub duration_us: u64,
    pub failed: bool,
    pub failure_time_us: Option<u64>,
    pub max_abs_theta: f64,
    pub final_state: PlantState,
    pub deadlines: DeadlineReport,
}

impl ScenarioSummary {
    pub fn fabric_misses(&self) -> u64 {
        self.deadlines.fabric_misses()
    }

    pub fn host_misses(&self) -> u64 {
        self.deadlines.host_misses()
    }

    /// `key = value` lines; floats in `{:.8e}`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "duration_us = {}", self.duration_us);
        let _ = writeln!(s, "failed = {}", self.failed);
        match self.failure_time_us {
            Some(t) => {
                let _ = writeln!(s, "failure_time_us = {t}");
            }
            None => {
                let _ = writeln!(s, "failure_time_us = none");
            }
        }
        let _ = writeln!(s, "max_abs_theta = {:.8e}", self.max_abs_theta);
        let f = self.final_state;
        let _ = writeln!(
            s,
            "final_state = theta={:.8e} omega={:.8e} x={:.8e} v={:.8e}",
            f.theta, f.omega, f.x, f.v
        );
        let _ = writeln!(s, "fabric_misses = {}", self.fabric_misses());
        let _ = writeln!(s, "host_misses = {}", self.host_misses());
        for (task, t) in &self.deadlines.tasks {
            let _ = writeln!(
                s,
                "task = \"{task}\" domain={} activations={} completions={} misses={} max_response_us={}",
                t.domain, t.activations, t.completions, t.misses, t.max_response_us
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub plan: DeploymentPlan,
    pub trace: Trace,
    pub summary: ScenarioSummary,
}

/// Compiles `manifest`, wires the robot behaviors to a fresh plant and runs
/// every event up to and including `duration_us`. A zero duration simulates
/// nothing and yields an empty trace.
pub fn run_scenario(
    manifest: &Manifest,
    config: &ScenarioConfig,
    seed: u64,
    duration_us: u64,
) -> Result<ScenarioRun, ScenarioError> {
    let plan = compile_plan(manifest)?;
    let initial = PlantState {
        theta: config.theta0,
        ..PlantState::default()
    };
    let plant = Rc::new(RefCell::new(Plant::new(
        config.plant.clone(),
        initial,
        seed,
        config.sample_us,
    )));
    let registry = robot_registry(&config.gains, &config.plant, &config.waypoints, &plant);
    let sys_config = SystemConfig {
        seed,
        jitter: Some(config.jitter.model(0)),
        ..SystemConfig::default()
    };
    let mut system = System::new(manifest, &plan, &registry, sys_config)?;
    if duration_us == 0 {
        let p = plant.borrow();
        return Ok(ScenarioRun {
            plan,
            trace: Trace::new(),
            summary: ScenarioSummary {
                seed,
                duration_us,
                failed: false,
                failure_time_us: None,
                max_abs_theta: p.max_abs_theta(),
                final_state: p.state(),
                deadlines: DeadlineReport::default(),
            },
        });
    }
    system.run_until(duration_us)?;
    plant.borrow_mut().advance_to(duration_us);

    let trace = system.take_trace();
    drop(system);
    let plant = Rc::try_unwrap(plant)
        .map(RefCell::into_inner)
        .unwrap_or_else(|rc| rc.borrow().clone());
    let mut plant_trace = Trace::new();
    for s in plant.samples() {
        plant_trace.push(
            s.time_us,
            TraceKind::PlantState,
            "plant",
            details![
                ("theta", s.state.theta),
                ("omega", s.state.omega),
                ("x", s.state.x),
                ("v", s.state.v),
                ("u", s.u)
            ],
        );
    }
    let mut failure = Trace::new();
    if let Some(t) = plant.failed_at_us() {
        failure.push(
            t,
            TraceKind::PlantFailure,
            "plant",
            details![("theta_fail", plant.params.theta_fail)],
        );
    }
    let trace = trace.merge(plant_trace.merge(failure));

    let summary = ScenarioSummary {
        seed,
        duration_us,
        failed: plant.failed(),
        failure_time_us: plant.failed_at_us(),
        max_abs_theta: plant.max_abs_theta(),
        final_state: plant.state(),
        deadlines: deadline_report(&trace),
    };
    Ok(ScenarioRun {
        plan,
        trace,
        summary,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("trace schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Per-task miss counts of both traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissDelta {
    pub a: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub identical: bool,
    /// Plant samples present in both traces at the same time.
    pub aligned_samples: usize,
    pub unaligned_samples: usize,
    pub max_abs_dtheta: f64,
    pub misses: BTreeMap<String, MissDelta>,
}

impl CompareReport {
    /// Machine-readable report; empty when the traces are identical.
    pub fn render(&self) -> String {
        if self.identical {
            return String::new();
        }
        let mut s = String::new();
        let _ = writeln!(s, "verdict = differs");
        let _ = writeln!(s, "aligned_samples = {}", self.aligned_samples);
        let _ = writeln!(s, "unaligned_samples = {}", self.unaligned_samples);
        let _ = writeln!(s, "max_abs_dtheta = {:.8e}", self.max_abs_dtheta);
        for (task, d) in &self.misses {
            if d.a != d.b {
                let _ = writeln!(s, "misses = \"{task}\" a={} b={}", d.a, d.b);
            }
        }
        s
    }
}

fn thetas(t: &Trace, which: &str) -> Result<BTreeMap<u64, f64>, CompareError> {
    let mut out = BTreeMap::new();
    for r in t.of_kind(TraceKind::PlantState) {
        let theta = r.get("theta").and_then(|v| v.as_f64()).ok_or_else(|| {
            CompareError::SchemaMismatch(format!(
                "trace {which}: plant_state at {} without numeric theta",
                r.time_us
            ))
        })?;
        out.insert(r.time_us, theta);
    }
    Ok(out)
}

/// Aligns plant samples by time and compares deadline misses per task.
pub fn compare_traces(a: &Trace, b: &Trace) -> Result<CompareReport, CompareError> {
    let ta = thetas(a, "a")?;
    let tb = thetas(b, "b")?;
    let mut aligned = 0;
    let mut max_d: f64 = 0.0;
    for (t, x) in &ta {
        if let Some(y) = tb.get(t) {
            aligned += 1;
            max_d = max_d.max((x - y).abs());
        }
    }
    let ra = deadline_report(a);
    let rb = deadline_report(b);
    let mut misses = BTreeMap::new();
    for (task, s) in &ra.tasks {
        misses.entry(task.clone()).or_insert_with(MissDelta::default).a = s.misses;
    }
    for (task, s) in &rb.tasks {
        misses.entry(task.clone()).or_insert_with(MissDelta::default).b = s.misses;
    }
    Ok(CompareReport {
        identical: a == b,
        aligned_samples: aligned,
        unaligned_samples: ta.len() + tb.len() - 2 * aligned,
        max_abs_dtheta: max_d,
        misses,
    })
}

/// Reads two CSV traces and compares them.
pub fn compare_trace_csv<R1: std::io::Read, R2: std::io::Read>(
    a: R1,
    b: R2,
) -> Result<CompareReport, CompareError> {
    let a = Trace::read_csv(a).map_err(|e| CompareError::SchemaMismatch(format!("trace a: {e}")))?;
    let b = Trace::read_csv(b).map_err(|e| CompareError::SchemaMismatch(format!("trace b: {e}")))?;
    compare_traces(&a, &b)
}
