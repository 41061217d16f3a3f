//! Gain tuning and jitter sweeps for the robot scenario.
//!
//! Tuning is a grid search at zero jitter and seed 0 on the all-host
//! deployment. A candidate is scored by ITAE, `sum t |theta| dt` over the
//! plant samples up to the horizon; candidates that fall within the full run
//! score infinity. The winner is the lowest score, ties going to the earlier
//! grid point.

use crate::manifest::Manifest;
use crate::sim::{Trace, TraceKind};

use super::config::{Gains, ScenarioConfig};
use super::run::{run_scenario, ScenarioError};

/// ITAE of the plant samples in `trace` up to and including `horizon_us`,
/// using each sample's spacing to its predecessor as its weight.
pub fn itae(trace: &Trace, horizon_us: u64) -> f64 {
    let mut sum = 0.0;
    let mut prev: Option<u64> = None;
    for r in trace.of_kind(TraceKind::PlantState) {
        if r.time_us > horizon_us {
            break;
        }
        let theta = r.get("theta").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        if let Some(p) = prev {
            let t = r.time_us as f64 * 1e-6;
            sum += t * theta.abs() * (r.time_us - p) as f64 * 1e-6;
        }
        prev = Some(r.time_us);
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
    pub balance_pole: Vec<f64>,
    pub horizon_us: u64,
}

impl Default for TuningGrid {
    /// The grid behind the frozen scenario gains. The 2 s horizon is the
    /// settling time `4 / position_pole` of the slow pole pair.
    fn default() -> Self {
        TuningGrid {
            kp: vec![1.0, 2.0, 3.0, 5.0, 10.0],
            ki: vec![0.0, 5.0],
            kd: vec![0.0, 0.01],
            balance_pole: (2..=12).map(|k| 5.0 * k as f64).collect(),
            horizon_us: 2_000_000,
        }
    }
}

impl TuningGrid {
    /// Every grid point in search order, on top of `base`.
    pub fn candidates(&self, base: &Gains) -> Vec<Gains> {
        let mut out = Vec::new();
        for &kp in &self.kp {
            for &ki in &self.ki {
                for &kd in &self.kd {
                    for &p in &self.balance_pole {
                        out.push(Gains {
                            kp,
                            ki,
                            kd,
                            balance_pole: p,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub gains: Gains,
    pub itae: f64,
    pub failed: bool,
    pub max_abs_theta: f64,
}

/// Scores every grid point; the result is sorted best first.
pub fn tune_gains(
    manifest: &Manifest,
    base: &ScenarioConfig,
    grid: &TuningGrid,
) -> Result<Vec<Candidate>, ScenarioError> {
    let mut out = Vec::new();
    for gains in grid.candidates(&base.gains) {
        let config = ScenarioConfig {
            gains: gains.clone(),
            ..base.clone().without_jitter()
        };
        let run = run_scenario(manifest, &config, 0, config.duration_us)?;
        let failed = run.summary.failed;
        out.push(Candidate {
            gains,
            itae: if failed {
                f64::INFINITY
            } else {
                itae(&run.trace, grid.horizon_us)
            },
            failed,
            max_abs_theta: run.summary.max_abs_theta,
        });
    }
    out.sort_by(|a, b| a.itae.total_cmp(&b.itae));
    Ok(out)
}

/// Outcome of one jitter setting over a seed set, before and after migration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub spike_latency_us: u64,
    pub spike_probability: f64,
    pub before_failures: usize,
    pub after_failures: usize,
    pub after_fabric_misses: u64,
    /// Median over the seeds of max |theta| before migration.
    pub before_median_max_theta: f64,
    pub seeds: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// Runs `before` and `after` under every (spike, probability) pair for each
/// seed in `seeds`, on top of the jitter in `base`.
pub fn jitter_sweep(
    before: &Manifest,
    after: &Manifest,
    base: &ScenarioConfig,
    spikes_us: &[u64],
    probabilities: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>, ScenarioError> {
    let mut out = Vec::new();
    for &spike in spikes_us {
        for &prob in probabilities {
            let mut config = base.clone();
            config.jitter.spike_latency_us = spike;
            config.jitter.spike_probability = prob;
            let mut maxes = Vec::new();
            let mut point = SweepPoint {
                spike_latency_us: spike,
                spike_probability: prob,
                before_failures: 0,
                after_failures: 0,
                after_fabric_misses: 0,
                before_median_max_theta: 0.0,
                seeds: seeds.len(),
            };
            for &seed in seeds {
                let b = run_scenario(before, &config, seed, config.duration_us)?.summary;
                let a = run_scenario(after, &config, seed, config.duration_us)?.summary;
                point.before_failures += b.failed as usize;
                point.after_failures += a.failed as usize;
                point.after_fabric_misses += a.fabric_misses();
                maxes.push(b.max_abs_theta);
            }
            point.before_median_max_theta = median(&maxes);
            out.push(point);
        }
    }
    Ok(out)
}

/// Per spike latency, the smallest probability at which at least
/// `min_failures` seeds fail before migration while none fail after.
pub fn thresholds(points: &[SweepPoint], min_failures: usize) -> Vec<(u64, Option<f64>)> {
    let mut spikes: Vec<u64> = points.iter().map(|p| p.spike_latency_us).collect();
    spikes.dedup();
    spikes
        .into_iter()
        .map(|s| {
            let p = points
                .iter()
                .filter(|p| p.spike_latency_us == s)
                .filter(|p| p.before_failures >= min_failures && p.after_failures == 0)
                .map(|p| p.spike_probability)
                .min_by(f64::total_cmp);
            (s, p)
        })
        .collect()
}
