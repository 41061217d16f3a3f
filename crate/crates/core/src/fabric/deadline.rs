use std::collections::BTreeMap;

use crate::sim::{Trace, TraceKind};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSummary {
    /// `fabric` or `host`.
    pub domain: String,
    pub activations: u64,
    pub completions: u64,
    pub misses: u64,
    pub max_response_us: u64,
}

/// Per-task deadline statistics keyed by `component.thread`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeadlineReport {
    pub tasks: BTreeMap<String, TaskSummary>,
}

impl DeadlineReport {
    pub fn fabric_misses(&self) -> u64 {
        self.domain_misses("fabric")
    }

    pub fn host_misses(&self) -> u64 {
        self.domain_misses("host")
    }

    fn domain_misses(&self, domain: &str) -> u64 {
        self.tasks
            .values()
            .filter(|t| t.domain == domain)
            .map(|t| t.misses)
            .sum()
    }
}

/// Summarizes `task_release`, `task_complete` and `deadline_miss` records.
pub fn deadline_report(trace: &Trace) -> DeadlineReport {
    let mut tasks: BTreeMap<String, TaskSummary> = BTreeMap::new();
    for r in &trace.records {
        let entry = || TaskSummary {
            domain: r
                .get("domain")
                .and_then(|v| v.as_str())
                .unwrap_or("fabric")
                .to_string(),
            ..TaskSummary::default()
        };
        match r.kind {
            TraceKind::TaskRelease => {
                tasks.entry(r.source.clone()).or_insert_with(entry).activations += 1;
            }
            TraceKind::TaskComplete => {
                let t = tasks.entry(r.source.clone()).or_insert_with(entry);
                t.completions += 1;
                let resp = r.get("response_us").and_then(|v| v.as_i64()).unwrap_or(0) as u64;
                t.max_response_us = t.max_response_us.max(resp);
            }
            TraceKind::DeadlineMiss => {
                tasks.entry(r.source.clone()).or_insert_with(entry).misses += 1;
            }
            _ => {}
        }
    }
    DeadlineReport { tasks }
}
