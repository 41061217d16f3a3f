//! Deterministic discrete-event engine, seeded random streams, and the trace
//! record shared by every simulated domain.
//!
//! Events run in `(time_us, seq)` order where `seq` increases with every
//! insertion, so simultaneous events run in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default bound on events executed at one virtual instant.
pub const DEFAULT_LIVELOCK_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {time_us} us, before current time {now_us} us")]
    PastEvent { time_us: u64, now_us: u64 },
    #[error("more than {limit} events at t = {time_us} us")]
    LivelockGuard { time_us: u64, limit: u64 },
}

struct Entry<E> {
    time_us: u64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time_us, self.seq) == (other.time_us, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time_us, other.seq).cmp(&(self.time_us, self.seq))
    }
}

/// Event queue with a virtual microsecond clock.
pub struct Engine<E> {
    now_us: u64,
    next_seq: u64,
    queue: BinaryHeap<Entry<E>>,
    livelock_limit: u64,
    at_instant: u64,
    executed: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Engine::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Engine<E> {
        Engine {
            now_us: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            livelock_limit: DEFAULT_LIVELOCK_LIMIT,
            at_instant: 0,
            executed: 0,
        }
    }

    pub fn with_livelock_limit(mut self, limit: u64) -> Engine<E> {
        self.livelock_limit = limit;
        self
    }

    pub fn now(&self) -> u64 {
        self.now_us
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events executed so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn schedule(&mut self, time_us: u64, payload: E) -> Result<(), SimError> {
        if time_us < self.now_us {
            return Err(SimError::PastEvent {
                time_us,
                now_us: self.now_us,
            });
        }
        self.queue.push(Entry {
            time_us,
            seq: self.next_seq,
            payload,
        });
        self.next_seq += 1;
        Ok(())
    }

    /// Time of the earliest pending event.
    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|e| e.time_us)
    }

    /// Removes the next event if it is due at or before `t_end_us` and moves
    /// the clock to it.
    pub fn pop_until(&mut self, t_end_us: u64) -> Result<Option<(u64, E)>, SimError> {
        match self.queue.peek() {
            Some(e) if e.time_us <= t_end_us => {}
            _ => return Ok(None),
        }
        let e = self.queue.pop().expect("peeked");
        if e.time_us == self.now_us {
            self.at_instant += 1;
        } else {
            self.now_us = e.time_us;
            self.at_instant = 1;
        }
        if self.at_instant > self.livelock_limit {
            return Err(SimError::LivelockGuard {
                time_us: self.now_us,
                limit: self.livelock_limit,
            });
        }
        self.executed += 1;
        Ok(Some((e.time_us, e.payload)))
    }

    /// Runs every event with `time_us <= t_end_us` (inclusive), then leaves the
    /// clock at `t_end_us`.
    pub fn run_until<X, F>(&mut self, t_end_us: u64, mut handler: F) -> Result<(), X>
    where
        X: From<SimError>,
        F: FnMut(&mut Engine<E>, E) -> Result<(), X>,
    {
        while let Some((_, payload)) = self.pop_until(t_end_us)? {
            handler(self, payload)?;
        }
        self.advance_to(t_end_us);
        Ok(())
    }

    /// Moves the clock forward without running events.
    pub fn advance_to(&mut self, t_us: u64) {
        if t_us > self.now_us {
            self.now_us = t_us;
            self.at_instant = 0;
        }
    }
}

/// Independent deterministic random stream `stream` of `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    Publish,
    Deliver,
    TaskRelease,
    TaskComplete,
    DeadlineMiss,
    ShmCycle,
    BusTransfer,
    BridgeTx,
    BridgeError,
    ServiceTimeout,
    PlantState,
    PlantFailure,
}

impl TraceKind {
    pub const ALL: [TraceKind; 12] = [
        TraceKind::Publish,
        TraceKind::Deliver,
        TraceKind::TaskRelease,
        TraceKind::TaskComplete,
        TraceKind::DeadlineMiss,
        TraceKind::ShmCycle,
        TraceKind::BusTransfer,
        TraceKind::BridgeTx,
        TraceKind::BridgeError,
        TraceKind::ServiceTimeout,
        TraceKind::PlantState,
        TraceKind::PlantFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Publish => "publish",
            TraceKind::Deliver => "deliver",
            TraceKind::TaskRelease => "task_release",
            TraceKind::TaskComplete => "task_complete",
            TraceKind::DeadlineMiss => "deadline_miss",
            TraceKind::ShmCycle => "shm_cycle",
            TraceKind::BusTransfer => "bus_transfer",
            TraceKind::BridgeTx => "bridge_tx",
            TraceKind::BridgeError => "bridge_error",
            TraceKind::ServiceTimeout => "service_timeout",
            TraceKind::PlantState => "plant_state",
            TraceKind::PlantFailure => "plant_failure",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown trace kind `{s}`"))
    }
}

/// A detail value. Floats render with 9 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn parse(s: &str) -> Value {
        if let Ok(i) = s.parse::<i64>() {
            Value::Int(i)
        } else if let Ok(f) = s.parse::<f64>() {
            Value::Float(f)
        } else {
            Value::Text(s.to_string())
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:.8e}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u16> for Value {
    fn from(v: u16) -> Self {
        Value::Int(v as i64)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub kind: TraceKind,
    pub source: String,
    pub details: Vec<(String, Value)>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn details_string(&self) -> String {
        self.details
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
}

pub const TRACE_HEADER: [&str; 4] = ["time_us", "kind", "source", "details"];

/// Ordered trace records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(
        &mut self,
        time_us: u64,
        kind: TraceKind,
        source: impl Into<String>,
        details: Vec<(String, Value)>,
    ) {
        debug_assert!(self.records.last().is_none_or(|r| r.time_us <= time_us));
        self.records.push(TraceRecord {
            time_us,
            kind,
            source: source.into(),
            details,
        });
    }

    /// Merges two time-ordered traces; on equal times records of `self` come
    /// first.
    pub fn merge(self, other: Trace) -> Trace {
        let mut out = Vec::with_capacity(self.records.len() + other.records.len());
        let mut b = other.records.into_iter().peekable();
        for r in self.records {
            while let Some(x) = b.next_if(|x| x.time_us < r.time_us) {
                out.push(x);
            }
            out.push(r);
        }
        out.extend(b);
        Trace { records: out }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn of_kind(&self, kind: TraceKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), TraceError> {
        let mut w = csv::WriterBuilder::new().from_writer(w);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.time_us.to_string().as_str(),
                r.kind.as_str(),
                r.source.as_str(),
                r.details_string().as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace is utf-8")
    }

    /// Parses a trace written by [`Trace::write_csv`]. Every record ends with
    /// a newline, so input cut off inside a record is rejected.
    pub fn read_csv<R: io::Read>(mut r: R) -> Result<Trace, TraceError> {
        let mut text = Vec::new();
        r.read_to_end(&mut text)?;
        if text.last().is_some_and(|&b| b != b'\n') {
            let line = text.iter().filter(|&&b| b == b'\n').count() as u64 + 1;
            return Err(TraceError::Schema {
                line,
                message: "truncated record".into(),
            });
        }
        let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_slice());
        let header = rd.headers()?.clone();
        if header.iter().ne(TRACE_HEADER) {
            return Err(TraceError::Schema {
                line: 1,
                message: format!("expected header `{}`", TRACE_HEADER.join(",")),
            });
        }
        let mut trace = Trace::new();
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let schema = |message: String| TraceError::Schema { line, message };
            if rec.len() != 4 {
                return Err(schema(format!("expected 4 columns, found {}", rec.len())));
            }
            let time_us = rec[0]
                .parse::<u64>()
                .map_err(|_| schema(format!("bad time `{}`", &rec[0])))?;
            if trace.records.last().is_some_and(|p| p.time_us > time_us) {
                return Err(schema("time goes backwards".into()));
            }
            let kind = rec[1].parse::<TraceKind>().map_err(schema)?;
            let mut details = Vec::new();
            if !rec[3].is_empty() {
                for kv in rec[3].split(';') {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| schema(format!("bad detail `{kv}`")))?;
                    details.push((k.to_string(), Value::parse(v)));
                }
            }
            trace.records.push(TraceRecord {
                time_us,
                kind,
                source: rec[2].to_string(),
                details,
            });
        }
        Ok(trace)
    }
}

/// Builds a detail list: `details![("k", v), ...]`.
#[macro_export]
macro_rules! details {
    ($(($k:expr, $v:expr)),* $(,)?) => {
        vec![$(($k.to_string(), $crate::sim::Value::from($v))),*]
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_left_first_on_ties() {
        let mut a = Trace::new();
        a.push(1, TraceKind::Publish, "a", vec![]);
        a.push(3, TraceKind::Publish, "a", vec![]);
        let mut b = Trace::new();
        b.push(0, TraceKind::PlantState, "b", vec![]);
        b.push(3, TraceKind::PlantState, "b", vec![]);
        b.push(4, TraceKind::PlantState, "b", vec![]);
        let order: Vec<(u64, String)> = a.merge(b).records.into_iter().map(|r| (r.time_us, r.source)).collect();
        let want = [(0, "b"), (1, "a"), (3, "a"), (3, "b"), (4, "b")];
        assert_eq!(order, want.map(|(t, s)| (t, s.to_string())));
    }

    #[test]
    fn same_time_runs_in_insertion_order() {
        let mut e = Engine::new();
        e.schedule(5, "a").unwrap();
        e.schedule(5, "b").unwrap();
        e.schedule(1, "c").unwrap();
        let mut seen = Vec::new();
        e.run_until(10, |_, p| {
            seen.push(p);
            Ok::<_, SimError>(())
        })
        .unwrap();
        assert_eq!(seen, ["c", "a", "b"]);
        assert_eq!(e.now(), 10);
    }

    #[test]
    fn past_event_rejected() {
        let mut e: Engine<()> = Engine::new();
        e.advance_to(10);
        assert_eq!(
            e.schedule(9, ()),
            Err(SimError::PastEvent {
                time_us: 9,
                now_us: 10
            })
        );
        assert!(e.schedule(10, ()).is_ok());
    }

    #[test]
    fn empty_queue_moves_clock_to_end() {
        let mut e: Engine<()> = Engine::new();
        e.run_until(500, |_, _| Ok::<_, SimError>(())).unwrap();
        assert_eq!(e.now(), 500);
    }

    #[test]
    fn periodic_source_is_inclusive_at_end() {
        let mut e = Engine::new();
        e.schedule(0, ()).unwrap();
        let mut n = 0;
        e.run_until(10_000, |e, ()| {
            n += 1;
            let next = e.now() + 1000;
            e.schedule(next, ())
        })
        .unwrap();
        assert_eq!(n, 11);
    }

    #[test]
    fn livelock_guard_trips() {
        let mut e = Engine::new().with_livelock_limit(100);
        e.schedule(3, ()).unwrap();
        let r = e.run_until(10, |e, ()| {
            let now = e.now();
            e.schedule(now, ())
        });
        assert_eq!(
            r,
            Err(SimError::LivelockGuard {
                time_us: 3,
                limit: 100
            })
        );
    }

    #[test]
    fn csv_roundtrip() {
        let mut t = Trace::new();
        t.push(0, TraceKind::Publish, "a", details![("topic", "x"), ("v", 1.5)]);
        t.push(7, TraceKind::PlantState, "plant", details![("theta", -0.25), ("n", 3u64)]);
        let text = t.to_csv_string();
        assert!(text.starts_with("time_us,kind,source,details\n"));
        assert!(text.contains("topic=x;v=1.50000000e0"));
        let back = Trace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_trace_is_schema_error() {
        let text = "time_us,kind,source,details\n0,publish\n";
        assert!(matches!(
            Trace::read_csv(text.as_bytes()),
            Err(TraceError::Schema { .. })
        ));
        assert!(Trace::read_csv("a,b\n".as_bytes()).is_err());
    }
}
