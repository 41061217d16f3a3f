use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::manifest::{MemoryEntry, MemoryMap};
use crate::model::CpuId;

/// A participant of the shared-memory network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Cpu(CpuId),
    /// Gateware block standing in for the named component.
    Gateware(String),
    /// Fabric end of the host bridge.
    Link,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Cpu(c) => write!(f, "cpu{c}"),
            Node::Gateware(n) => write!(f, "gw:{n}"),
            Node::Link => f.write_str("link"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShmError {
    #[error("topic `{0}` has no shared-memory slot")]
    UnmappedTopic(String),
    #[error("node {node} does not own the slot of `{topic}`")]
    NotOwner { node: Node, topic: String },
    #[error("node {0} is not attached to the network")]
    UnknownNode(Node),
    #[error("slot of `{topic}` has {expected} words, write has {got}")]
    SizeMismatch {
        topic: String,
        expected: u32,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRead<'a> {
    pub words: &'a [u32],
    /// Cycle boundary at which the current value became visible; `None` if
    /// the slot was never written.
    pub written_at_us: Option<u64>,
}

/// Topics made visible at one cycle boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleApplied {
    pub at_us: u64,
    pub topics: Vec<String>,
}

/// Cycle-replicated, word-addressed memory.
///
/// A write at `t` is buffered and copied into every replica at the first
/// cycle boundary strictly after `t`.
#[derive(Debug, Clone)]
pub struct SharedMemoryNetwork {
    cycle_us: u64,
    entries: BTreeMap<String, MemoryEntry>,
    owners: BTreeMap<String, Node>,
    replicas: BTreeMap<Node, Vec<u32>>,
    written_at: BTreeMap<String, u64>,
    pending: BTreeMap<String, (Vec<u32>, u64)>,
    now_us: u64,
}

impl SharedMemoryNetwork {
    pub fn new(
        map: &MemoryMap,
        cycle_us: u64,
        nodes: impl IntoIterator<Item = Node>,
        owners: BTreeMap<String, Node>,
    ) -> SharedMemoryNetwork {
        assert!(cycle_us > 0, "shared-memory cycle must be positive");
        let replicas = nodes
            .into_iter()
            .map(|n| (n, vec![0u32; map.capacity as usize]))
            .collect();
        SharedMemoryNetwork {
            cycle_us,
            entries: map.entries.clone(),
            owners,
            replicas,
            written_at: BTreeMap::new(),
            pending: BTreeMap::new(),
            now_us: 0,
        }
    }

    pub fn cycle_us(&self) -> u64 {
        self.cycle_us
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.replicas.keys()
    }

    pub fn owner(&self, topic: &str) -> Option<&Node> {
        self.owners.get(topic)
    }

    /// First boundary strictly after `t_us`.
    pub fn next_boundary(&self, t_us: u64) -> u64 {
        (t_us / self.cycle_us + 1) * self.cycle_us
    }

    /// Earliest boundary with buffered writes.
    pub fn next_apply_us(&self) -> Option<u64> {
        self.pending.values().map(|(_, at)| *at).min()
    }

    /// Buffers a write; returns the boundary at which it becomes visible.
    pub fn write(
        &mut self,
        node: &Node,
        topic: &str,
        words: &[u32],
        now_us: u64,
    ) -> Result<u64, ShmError> {
        let entry = self
            .entries
            .get(topic)
            .ok_or_else(|| ShmError::UnmappedTopic(topic.to_string()))?;
        if self.owners.get(topic) != Some(node) {
            return Err(ShmError::NotOwner {
                node: node.clone(),
                topic: topic.to_string(),
            });
        }
        if words.len() != entry.size_words as usize {
            return Err(ShmError::SizeMismatch {
                topic: topic.to_string(),
                expected: entry.size_words,
                got: words.len(),
            });
        }
        self.advance_to(now_us);
        let at = self.next_boundary(now_us);
        self.pending.insert(topic.to_string(), (words.to_vec(), at));
        Ok(at)
    }

    /// Applies every buffered write whose boundary is `<= now_us`, grouped by
    /// boundary in time order.
    pub fn advance_to(&mut self, now_us: u64) -> Vec<CycleApplied> {
        self.now_us = self.now_us.max(now_us);
        let mut due: Vec<(u64, String)> = self
            .pending
            .iter()
            .filter(|(_, (_, at))| *at <= now_us)
            .map(|(t, (_, at))| (*at, t.clone()))
            .collect();
        if due.is_empty() {
            return Vec::new();
        }
        due.sort();
        let mut out: Vec<CycleApplied> = Vec::new();
        for (at, topic) in due {
            let (words, _) = self.pending.remove(&topic).expect("pending write");
            let e = self.entries[&topic];
            let range = e.base as usize..(e.base + e.size_words) as usize;
            for replica in self.replicas.values_mut() {
                replica[range.clone()].copy_from_slice(&words);
            }
            self.written_at.insert(topic.clone(), at);
            match out.last_mut() {
                Some(c) if c.at_us == at => c.topics.push(topic),
                _ => out.push(CycleApplied {
                    at_us: at,
                    topics: vec![topic],
                }),
            }
        }
        out
    }

    /// Reads the local replica of `node`.
    pub fn read(&self, node: &Node, topic: &str) -> Result<SlotRead<'_>, ShmError> {
        let entry = self
            .entries
            .get(topic)
            .ok_or_else(|| ShmError::UnmappedTopic(topic.to_string()))?;
        let replica = self
            .replicas
            .get(node)
            .ok_or_else(|| ShmError::UnknownNode(node.clone()))?;
        Ok(SlotRead {
            words: &replica[entry.base as usize..(entry.base + entry.size_words) as usize],
            written_at_us: self.written_at.get(topic).copied(),
        })
    }

    pub fn replicas_identical(&self) -> bool {
        let mut it = self.replicas.values();
        match it.next() {
            None => true,
            Some(first) => it.all(|r| r == first),
        }
    }
}
