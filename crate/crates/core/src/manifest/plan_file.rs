use std::fmt::Write;

use super::compile::{ChannelSubject, DeploymentPlan};
use super::rta::ResponseTime;

/// Renders the plan as deterministic text: `[memory_map]`, one
/// `[schedule cpu=f.c]` per softcore CPU, `[routing]`, `[diagnostics]`.
pub fn render_plan(plan: &DeploymentPlan) -> String {
    let mut s = String::new();
    let mm = &plan.memory_map;
    s.push_str("[memory_map]\n");
    let _ = writeln!(s, "capacity_words = {}", mm.capacity);
    let _ = writeln!(s, "used_words = {}", mm.used_words());
    for (topic, e) in &mm.entries {
        let _ = writeln!(
            s,
            "topic = {topic:?} base = {} size_words = {}",
            e.base, e.size_words
        );
    }

    for table in &plan.schedules {
        let _ = writeln!(s, "\n[schedule cpu={}]", table.cpu);
        let _ = writeln!(s, "utilization = {:.6}", table.utilization());
        for t in &table.tasks {
            let response = match t.response {
                Some(ResponseTime::Bounded(r)) => r.to_string(),
                Some(ResponseTime::Unschedulable { .. }) => "unschedulable".to_string(),
                None => "unknown".to_string(),
            };
            let _ = writeln!(
                s,
                "task = {:?} period_us = {} budget_us = {} deadline_us = {} priority = {} response_us = {response}",
                t.key(),
                t.period_us,
                t.budget_us,
                t.deadline_us,
                t.priority
            );
        }
    }

    let r = &plan.routing;
    s.push_str("\n[routing]\n");
    for (component, target) in &r.placements {
        let _ = writeln!(s, "component = {component:?} target = {target}");
    }
    for t in &r.topics {
        for e in &t.edges {
            let _ = writeln!(
                s,
                "topic = {:?} publisher = {:?} subscriber = {:?} mechanism = {}",
                t.topic, e.publisher, e.subscriber, e.mechanism
            );
        }
    }
    for sv in &r.services {
        for e in &sv.edges {
            let _ = writeln!(
                s,
                "service = {:?} caller = {:?} provider = {:?} mechanism = {}",
                sv.service, e.caller, e.provider, e.mechanism
            );
        }
    }
    for c in &r.channels {
        let (kind, name) = match &c.subject {
            ChannelSubject::Topic(n) => ("topic", n),
            ChannelSubject::Service(n) => ("service", n),
        };
        let _ = writeln!(
            s,
            "channel = {} {kind} = {name:?} direction = {}",
            c.id, c.direction
        );
    }

    s.push_str("\n[diagnostics]\n");
    for d in &plan.diagnostics {
        let _ = writeln!(s, "{d}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{compile_plan, parse_manifest};

    #[test]
    fn host_only_plan_has_empty_memory_map() {
        let m = parse_manifest(
            r#"
            topic "t" { type T { x: f32 } }
            component "a" { placement = host thread "m" { period_us = 10 budget_us = 1 } publish "t" }
            "#,
        )
        .unwrap();
        let text = render_plan(&compile_plan(&m).unwrap());
        let section: Vec<&str> = text
            .split("\n\n")
            .next()
            .unwrap()
            .lines()
            .collect();
        assert_eq!(
            section,
            ["[memory_map]", "capacity_words = 1024", "used_words = 0"]
        );
        assert!(!text.contains("[schedule"));
    }
}
