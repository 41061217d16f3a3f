use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("no bus wiring from `{src}` to `{dst}`")]
    UnwiredPair { src: String, dst: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub src: String,
    pub dst: String,
    pub payload: Vec<u8>,
    pub sent_us: u64,
    pub ready_us: u64,
    /// Caller-defined tag carried unchanged (e.g. a call id).
    pub tag: u64,
}

/// Point-to-point address-data bus with a fixed transfer delay.
#[derive(Debug, Clone)]
pub struct ServiceBus {
    delay_us: u64,
    wired: BTreeSet<(String, String)>,
    pending: VecDeque<Transfer>,
}

impl ServiceBus {
    pub fn new(delay_us: u64) -> ServiceBus {
        ServiceBus {
            delay_us,
            wired: BTreeSet::new(),
            pending: VecDeque::new(),
        }
    }

    pub fn delay_us(&self) -> u64 {
        self.delay_us
    }

    /// Wires both directions between two endpoints.
    pub fn wire(&mut self, a: &str, b: &str) {
        self.wired.insert((a.to_string(), b.to_string()));
        self.wired.insert((b.to_string(), a.to_string()));
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Queues a transfer; returns its delivery time `now + delay`.
    pub fn transfer(
        &mut self,
        src: &str,
        dst: &str,
        payload: Vec<u8>,
        tag: u64,
        now_us: u64,
    ) -> Result<u64, BusError> {
        if !self.wired.contains(&(src.to_string(), dst.to_string())) {
            return Err(BusError::UnwiredPair {
                src: src.to_string(),
                dst: dst.to_string(),
            });
        }
        let ready_us = now_us + self.delay_us;
        self.pending.push_back(Transfer {
            src: src.to_string(),
            dst: dst.to_string(),
            payload,
            sent_us: now_us,
            ready_us,
            tag,
        });
        Ok(ready_us)
    }

    /// Removes and returns every transfer due at or before `now_us`, in send
    /// order (which is also per-pair FIFO order, the delay being constant).
    pub fn deliver_due(&mut self, now_us: u64) -> Vec<Transfer> {
        let mut out = Vec::new();
        while self.pending.front().is_some_and(|t| t.ready_us <= now_us) {
            out.push(self.pending.pop_front().expect("front exists"));
        }
        out
    }
}
