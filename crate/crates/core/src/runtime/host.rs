use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fabric::TaskStats;
use crate::model::ThreadSpec;
use crate::sim::rng_stream;

/// Activation delay of host threads: a constant base latency plus, with
/// probability `spike_probability`, an extra spike.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JitterModel {
    pub base_latency_us: u64,
    pub spike_latency_us: u64,
    pub spike_probability: f64,
    pub rng_seed: u64,
}

impl JitterModel {
    pub fn none() -> JitterModel {
        JitterModel::default()
    }

    pub fn spikes(probability: f64, spike_latency_us: u64) -> JitterModel {
        JitterModel {
            spike_probability: probability,
            spike_latency_us,
            ..JitterModel::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> JitterModel {
        self.rng_seed = seed;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.base_latency_us == 0 && (self.spike_latency_us == 0 || self.spike_probability == 0.0)
    }

    /// One delay draw. Exactly one uniform is consumed per call, so a higher
    /// probability on the same stream spikes on a superset of activations.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.random();
        if u < self.spike_probability {
            self.base_latency_us + self.spike_latency_us
        } else {
            self.base_latency_us
        }
    }
}

/// Timing of one host activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostActivation {
    pub release_us: u64,
    pub start_us: u64,
    pub finish_us: u64,
}

impl HostActivation {
    pub fn response_us(&self) -> u64 {
        self.finish_us - self.release_us
    }

    pub fn lateness_us(&self) -> u64 {
        self.start_us - self.release_us
    }
}

/// What happened at one period boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostRelease {
    Activated(HostActivation),
    /// The previous activation was still pending; like a ROS timer, the
    /// missed period is dropped instead of queued.
    Skipped { release_us: u64 },
}

/// One periodic host thread.
///
/// Period boundary `k` falls at `k * period`. If the previous activation has
/// not finished by then the boundary is skipped; otherwise the activation
/// starts after its jitter delay and runs for the budget. An effective
/// deadline miss is a skipped boundary or a start later than the deadline.
#[derive(Debug, Clone)]
pub struct HostThread {
    pub component: String,
    pub spec: ThreadSpec,
    jitter: JitterModel,
    rng: ChaCha8Rng,
    next_release_us: u64,
    busy_until_us: u64,
    stats: TaskStats,
}

impl HostThread {
    /// `stream` selects an independent random stream of the jitter seed.
    pub fn new(component: &str, spec: ThreadSpec, jitter: JitterModel, stream: u64) -> HostThread {
        let rng = rng_stream(jitter.rng_seed, stream);
        HostThread {
            component: component.to_string(),
            spec,
            jitter,
            rng,
            next_release_us: 0,
            busy_until_us: 0,
            stats: TaskStats::default(),
        }
    }

    pub fn key(&self) -> String {
        format!("{}.{}", self.component, self.spec.name)
    }

    pub fn next_release_us(&self) -> u64 {
        self.next_release_us
    }

    pub fn stats(&self) -> TaskStats {
        self.stats
    }

    /// Consumes the next period boundary. Skipped boundaries draw no jitter.
    pub fn release(&mut self) -> HostRelease {
        let release_us = self.next_release_us;
        self.next_release_us += self.spec.period_us;
        self.stats.activations += 1;
        if release_us < self.busy_until_us {
            self.stats.misses += 1;
            return HostRelease::Skipped { release_us };
        }
        let start_us = release_us + self.jitter.sample(&mut self.rng);
        let finish_us = start_us + self.spec.budget_us;
        self.busy_until_us = finish_us;
        HostRelease::Activated(HostActivation {
            release_us,
            start_us,
            finish_us,
        })
    }

    /// Records a completion; returns whether it was an effective deadline miss.
    pub fn complete(&mut self, a: &HostActivation) -> bool {
        let missed = a.lateness_us() > self.spec.deadline_us;
        self.stats.completions += 1;
        self.stats.max_response_us = self.stats.max_response_us.max(a.response_us());
        if missed {
            self.stats.misses += 1;
        }
        missed
    }
}

/// Period boundaries of one host thread up to and including `t_end_us`.
pub fn host_releases(spec: &ThreadSpec, jitter: &JitterModel, stream: u64, t_end_us: u64) -> Vec<HostRelease> {
    let mut t = HostThread::new("", spec.clone(), jitter.clone(), stream);
    let mut out = Vec::new();
    while t.next_release_us() <= t_end_us {
        out.push(t.release());
    }
    out
}

/// The activations among [`host_releases`].
pub fn host_activations(
    spec: &ThreadSpec,
    jitter: &JitterModel,
    stream: u64,
    t_end_us: u64,
) -> Vec<HostActivation> {
    host_releases(spec, jitter, stream, t_end_us)
        .into_iter()
        .filter_map(|r| match r {
            HostRelease::Activated(a) => Some(a),
            HostRelease::Skipped { .. } => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thread(period: u64) -> ThreadSpec {
        ThreadSpec::new("main", period, 100)
    }

    #[test]
    fn zero_jitter_starts_on_period() {
        let a = host_activations(&thread(1000), &JitterModel::none(), 0, 5000);
        let starts: Vec<u64> = a.iter().map(|a| a.start_us).collect();
        assert_eq!(starts, vec![0, 1000, 2000, 3000, 4000, 5000]);
    }

    #[test]
    fn forced_spike_delays_every_activation() {
        let j = JitterModel::spikes(1.0, 5000);
        let a = host_activations(&thread(10_000), &j, 0, 50_000);
        assert!(a.iter().all(|a| a.start_us - a.release_us == 5000));
    }

    #[test]
    fn seeded_sequence_repeats() {
        let j = JitterModel::spikes(0.2, 3000).with_seed(42);
        let a = host_activations(&thread(1000), &j, 3, 100_000);
        let b = host_activations(&thread(1000), &j, 3, 100_000);
        assert_eq!(a, b);
        assert!(a.iter().any(|x| x.start_us > x.release_us));
    }

    #[test]
    fn activations_never_reorder() {
        let j = JitterModel::spikes(0.3, 8000).with_seed(1);
        let a = host_activations(&thread(1000), &j, 0, 200_000);
        assert!(a.windows(2).all(|w| w[1].start_us >= w[0].finish_us));
    }

    #[test]
    fn overrun_skips_boundaries() {
        let j = JitterModel::spikes(1.0, 2500);
        let r = host_releases(&thread(1000), &j, 0, 6000);
        let skipped: Vec<u64> = r
            .iter()
            .filter_map(|r| match r {
                HostRelease::Skipped { release_us } => Some(*release_us),
                HostRelease::Activated(_) => None,
            })
            .collect();
        // Activations at 0 and 3000 run until 2600 and 5600.
        assert_eq!(skipped, vec![1000, 2000, 4000, 5000]);
    }
}
