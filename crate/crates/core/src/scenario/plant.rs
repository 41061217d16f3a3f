//! Linearized two-wheeled balancing robot.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sim::rng_stream;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// g / l in s^-2.
    pub a: f64,
    /// Angular acceleration per unit torque command.
    pub b: f64,
    /// Pendulum length in m.
    pub l: f64,
    /// Standard deviation of the gyro noise in rad/s.
    pub gyro_sigma: f64,
    pub theta_fail: f64,
    pub step_us: u64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            a: GRAVITY / 0.5,
            b: 20.0,
            l: 0.5,
            gyro_sigma: 0.0,
            theta_fail: 0.5,
            step_us: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub theta: f64,
    pub omega: f64,
    pub x: f64,
    pub v: f64,
}

impl PlantState {
    fn axpy(self, k: f64, d: PlantState) -> PlantState {
        PlantState {
            theta: self.theta + k * d.theta,
            omega: self.omega + k * d.omega,
            x: self.x + k * d.x,
            v: self.v + k * d.v,
        }
    }
}

fn derivative(p: &PlantParams, s: PlantState, u: f64) -> PlantState {
    PlantState {
        theta: s.omega,
        omega: p.a * s.theta + p.b * u,
        x: s.v,
        v: -p.l * p.b * u,
    }
}

/// One classic RK4 step of length `h` seconds with `u` held constant.
pub fn rk4_step(p: &PlantParams, s: PlantState, u: f64, h: f64) -> PlantState {
    let k1 = derivative(p, s, u);
    let k2 = derivative(p, s.axpy(h / 2.0, k1), u);
    let k3 = derivative(p, s.axpy(h / 2.0, k2), u);
    let k4 = derivative(p, s.axpy(h, k3), u);
    PlantState {
        theta: s.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        omega: s.omega + h / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega),
        x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        v: s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
    }
}

/// Sampled plant state for the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSample {
    pub time_us: u64,
    pub state: PlantState,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    state: PlantState,
    u: f64,
    t_us: u64,
    failed_at_us: Option<u64>,
    max_abs_theta: f64,
    noise: ChaCha8Rng,
    sample_us: u64,
    next_sample_us: u64,
    samples: Vec<PlantSample>,
}

impl Plant {
    /// `sample_us = 0` disables state sampling.
    pub fn new(params: PlantParams, initial: PlantState, noise_seed: u64, sample_us: u64) -> Plant {
        assert!(params.step_us > 0, "integration step must be positive");
        Plant {
            params,
            state: initial,
            u: 0.0,
            t_us: 0,
            failed_at_us: None,
            max_abs_theta: initial.theta.abs(),
            noise: rng_stream(noise_seed, 0x504c414e54),
            sample_us,
            next_sample_us: 0,
            samples: Vec::new(),
        }
    }

    pub fn state(&self) -> PlantState {
        self.state
    }

    pub fn time_us(&self) -> u64 {
        self.t_us
    }

    pub fn input(&self) -> f64 {
        self.u
    }

    pub fn failed(&self) -> bool {
        self.failed_at_us.is_some()
    }

    pub fn failed_at_us(&self) -> Option<u64> {
        self.failed_at_us
    }

    /// Largest |theta| seen at integration step boundaries.
    pub fn max_abs_theta(&self) -> f64 {
        self.max_abs_theta
    }

    pub fn samples(&self) -> &[PlantSample] {
        &self.samples
    }

    /// Zero-order-hold input applied from the current time on.
    pub fn set_input(&mut self, u: f64) {
        self.u = u;
    }

    /// Advances by `dt_us` with input `u`, in steps of at most `step_us`.
    pub fn plant_step(&mut self, u: f64, dt_us: u64) -> PlantState {
        assert!(dt_us > 0, "plant_step needs a positive duration");
        self.u = u;
        let target = self.t_us + dt_us;
        self.advance_to(target);
        self.state
    }

    /// Integrates up to `t_us`. After a failure the state stays frozen.
    pub fn advance_to(&mut self, t_us: u64) {
        while self.t_us < t_us {
            self.take_sample();
            let grid = (self.t_us / self.params.step_us + 1) * self.params.step_us;
            let next = grid.min(t_us);
            if self.failed_at_us.is_none() {
                let h = (next - self.t_us) as f64 * 1e-6;
                self.state = rk4_step(&self.params, self.state, self.u, h);
                self.max_abs_theta = self.max_abs_theta.max(self.state.theta.abs());
                if self.state.theta.abs() > self.params.theta_fail {
                    self.failed_at_us = Some(next);
                }
            }
            self.t_us = next;
        }
        self.take_sample();
    }

    fn take_sample(&mut self) {
        if self.sample_us > 0 && self.t_us >= self.next_sample_us {
            self.samples.push(PlantSample {
                time_us: self.t_us,
                state: self.state,
                u: self.u,
            });
            self.next_sample_us = self.t_us - self.t_us % self.sample_us + self.sample_us;
        }
    }

    /// Gyro reading: angular rate plus gaussian noise.
    pub fn read_gyro(&mut self) -> f64 {
        let sigma = self.params.gyro_sigma;
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            self.state.omega + n.sample(&mut self.noise)
        } else {
            self.state.omega
        }
    }
}

/// Open-loop angle from rest at `theta0`: theta0 * cosh(sqrt(a) t).
pub fn open_loop_theta(a: f64, theta0: f64, t_s: f64) -> f64 {
    theta0 * (a.sqrt() * t_s).cosh()
}
