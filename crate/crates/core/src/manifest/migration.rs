use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::{Diagnostic, Subject};

use super::compile::{DeploymentPlan, TopicMechanism};

/// Delivery semantics a subscriber observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SemanticsClass {
    /// Every publication is delivered, in order.
    Queue,
    /// Only the most recent value is visible at activation.
    LastValue,
}

impl fmt::Display for SemanticsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemanticsClass::Queue => "queue",
            SemanticsClass::LastValue => "last_value",
        })
    }
}

impl SemanticsClass {
    pub fn of(mechanism: &TopicMechanism) -> SemanticsClass {
        match mechanism {
            TopicMechanism::SharedMemory { .. } | TopicMechanism::IntraCpuDirect => {
                SemanticsClass::LastValue
            }
            TopicMechanism::LinkBridge { .. } | TopicMechanism::HostLocal => SemanticsClass::Queue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicClassChange {
    pub topic: String,
    /// `None` when the topic has no connected pair.
    pub before: Option<SemanticsClass>,
    pub after: Option<SemanticsClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// Publisher/subscriber and caller/provider pairs are identical.
    pub topology_equal: bool,
    /// One entry per topic, sorted by name.
    pub topics: Vec<TopicClassChange>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EquivalenceReport {
    pub fn equivalent(&self) -> bool {
        self.topology_equal && !self.diagnostics.iter().any(Diagnostic::is_error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| !d.is_error())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MigrationError {
    #[error("{kind} sets differ: only before: [{}], only after: [{}]", only_before.join(", "), only_after.join(", "))]
    TopologyMismatch {
        kind: &'static str,
        only_before: Vec<String>,
        only_after: Vec<String>,
    },
}

fn same_set(
    kind: &'static str,
    a: BTreeSet<String>,
    b: BTreeSet<String>,
) -> Result<(), MigrationError> {
    if a == b {
        return Ok(());
    }
    Err(MigrationError::TopologyMismatch {
        kind,
        only_before: a.difference(&b).cloned().collect(),
        only_after: b.difference(&a).cloned().collect(),
    })
}

/// Queue when any subscriber still sees queued delivery.
fn topic_class(plan: &DeploymentPlan, topic: &str) -> Option<SemanticsClass> {
    plan.routing
        .topic(topic)?
        .edges
        .iter()
        .map(|e| SemanticsClass::of(&e.mechanism))
        .min()
}

/// Publisher/subscriber pairs of `topic` whose delivery went from queue to
/// last-value.
fn degraded_pairs(before: &DeploymentPlan, after: &DeploymentPlan, topic: &str) -> Vec<(String, String)> {
    let (Some(b), Some(a)) = (before.routing.topic(topic), after.routing.topic(topic)) else {
        return Vec::new();
    };
    a.edges
        .iter()
        .filter(|ea| SemanticsClass::of(&ea.mechanism) == SemanticsClass::LastValue)
        .filter(|ea| {
            b.edges.iter().any(|eb| {
                eb.publisher == ea.publisher
                    && eb.subscriber == ea.subscriber
                    && SemanticsClass::of(&eb.mechanism) == SemanticsClass::Queue
            })
        })
        .map(|e| (e.publisher.clone(), e.subscriber.clone()))
        .collect()
}

type Pairs = BTreeSet<(String, String, String)>;

fn pairs(plan: &DeploymentPlan) -> (Pairs, Pairs) {
    let topics = plan
        .routing
        .topics
        .iter()
        .flat_map(|t| {
            t.edges
                .iter()
                .map(|e| (t.topic.clone(), e.publisher.clone(), e.subscriber.clone()))
        })
        .collect();
    let services = plan
        .routing
        .services
        .iter()
        .flat_map(|s| {
            s.edges
                .iter()
                .map(|e| (s.service.clone(), e.caller.clone(), e.provider.clone()))
        })
        .collect();
    (topics, services)
}

/// Compares two plans of the same system that differ only in placement.
pub fn check_migration(
    before: &DeploymentPlan,
    after: &DeploymentPlan,
) -> Result<EquivalenceReport, MigrationError> {
    same_set(
        "component",
        before.routing.placements.keys().cloned().collect(),
        after.routing.placements.keys().cloned().collect(),
    )?;
    same_set(
        "topic",
        before.routing.topics.iter().map(|t| t.topic.clone()).collect(),
        after.routing.topics.iter().map(|t| t.topic.clone()).collect(),
    )?;
    same_set(
        "service",
        before.routing.services.iter().map(|s| s.service.clone()).collect(),
        after.routing.services.iter().map(|s| s.service.clone()).collect(),
    )?;

    let topology_equal = pairs(before) == pairs(after);
    let mut diagnostics = BTreeSet::new();
    let mut topics = Vec::new();
    for t in &after.routing.topics {
        let change = TopicClassChange {
            topic: t.topic.clone(),
            before: topic_class(before, &t.topic),
            after: topic_class(after, &t.topic),
        };
        let degraded = degraded_pairs(before, after, &t.topic);
        if !degraded.is_empty() {
            let subs: Vec<&str> = degraded.iter().map(|(_, s)| s.as_str()).collect();
            diagnostics.insert(Diagnostic::warning(
                Some(Subject::Topic(t.topic.clone())),
                format!(
                    "topic `{}` changes from queue to last-value delivery for {}; subscribers may skip intermediate messages",
                    t.topic,
                    subs.join(", ")
                ),
            ));
        }
        topics.push(change);
    }

    // Guard: fabric-shared topics must have a sized slot.
    for plan in [before, after] {
        for t in &plan.routing.topics {
            let shared = t
                .edges
                .iter()
                .any(|e| matches!(e.mechanism, TopicMechanism::SharedMemory { .. }));
            let sized = plan
                .memory_map
                .entries
                .get(&t.topic)
                .is_some_and(|e| e.size_words > 0);
            if shared && !sized {
                diagnostics.insert(Diagnostic::error(
                    Some(Subject::Topic(t.topic.clone())),
                    format!("topic `{}` is shared on the fabric without a fixed-size slot", t.topic),
                ));
            }
        }
    }

    Ok(EquivalenceReport {
        topology_equal,
        topics,
        diagnostics: diagnostics.into_iter().collect(),
    })
}
