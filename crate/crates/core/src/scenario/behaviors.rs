//! Behaviors of the balancing-robot components.
//!
//! `pid` is a generic 1 kHz wheel-velocity regulator on the fabric. Balance
//! is the job of `maintain_position`, a 100 Hz state-feedback loop that
//! steers the wheel-velocity setpoint from the filtered pitch and the
//! odometry, so the robot stays upright only as long as that loop keeps up.

use std::cell::RefCell;
use std::rc::Rc;

use crate::model::{ComponentSpec, Message};
use crate::runtime::{Behavior, BehaviorRegistry, Context, RuntimeError};

use super::config::Gains;
use super::plant::{Plant, PlantParams};

pub type PlantHandle = Rc<RefCell<Plant>>;

fn publish_values(ctx: &mut Context<'_>, topic: &str, values: &[f64]) -> Result<(), RuntimeError> {
    let ty = ctx
        .topic_type(topic)
        .ok_or_else(|| ctx.fail(format!("unknown topic `{topic}`")))?
        .clone();
    if ty.fields().len() != values.len() {
        return Err(ctx.fail(format!(
            "topic `{topic}` has {} fields, behavior produces {}",
            ty.fields().len(),
            values.len()
        )));
    }
    ctx.publish(topic, Message::from_f64s(&ty, values))
}

fn field(ctx: &Context<'_>, msg: &Message, name: &str) -> Result<f64, RuntimeError> {
    msg.f64(name)
        .ok_or_else(|| ctx.fail(format!("message `{}` has no field `{name}`", msg.type_name())))
}

fn period_s(spec: &ComponentSpec) -> f64 {
    spec.threads.first().map_or(1e-3, |t| t.period_us as f64 * 1e-6)
}

/// Publishes the configured waypoints, one per activation.
pub struct Navigation {
    waypoints: Vec<f64>,
    next: usize,
}

impl Behavior for Navigation {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let wp = self.waypoints.get(self.next).copied().unwrap_or(0.0);
        self.next = (self.next + 1) % self.waypoints.len().max(1);
        publish_values(ctx, "waypoint", &[wp])
    }
}

/// Turns the latest waypoint into a position reference ramped at
/// `max_speed`.
pub struct Movement {
    x_ref: f64,
    max_speed: f64,
    dt: f64,
}

impl Behavior for Movement {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let target = match ctx.latest("waypoint")? {
            Some(m) => field(ctx, m, "x")?,
            None => self.x_ref,
        };
        let step = (target - self.x_ref).clamp(-self.max_speed * self.dt, self.max_speed * self.dt);
        self.x_ref += step;
        let v_ref = step / self.dt;
        publish_values(ctx, "velocity_cmd", &[self.x_ref, v_ref])
    }
}

/// State-feedback gains on the wheel acceleration:
/// `acc = k_theta θ + k_omega θ' + k_x (x - x_ref) + k_v (v - v_ref)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceGains {
    pub k_theta: f64,
    pub k_omega: f64,
    pub k_x: f64,
    pub k_v: f64,
}

impl BalanceGains {
    /// Pole placement for `θ'' = a θ - x''/l`, `x'' = acc`: two poles at `-p`
    /// and two at `-q`. Matches `(s + p)^2 (s + q)^2` against
    /// `s^4 + (k_omega/l - k_v) s^3 + (k_theta/l - k_x - a) s^2 + a k_v s + a k_x`.
    pub fn place(a: f64, l: f64, p: f64, q: f64) -> BalanceGains {
        let c3 = 2.0 * (p + q);
        let c2 = p * p + 4.0 * p * q + q * q;
        let c1 = 2.0 * p * q * (p + q);
        let c0 = p * p * q * q;
        let k_x = c0 / a;
        let k_v = c1 / a;
        BalanceGains {
            k_theta: l * (c2 + k_x + a),
            k_omega: l * (c3 + k_v),
            k_x,
            k_v,
        }
    }
}

/// Balances the robot and holds the commanded position by steering the
/// wheel-velocity setpoint.
pub struct MaintainPosition {
    k: BalanceGains,
    v_max: f64,
    dt: f64,
}

impl Behavior for MaintainPosition {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let Some(imu) = ctx.latest("imu_filtered")? else {
            return publish_values(ctx, "balance_cmd", &[0.0]);
        };
        let theta = field(ctx, imu, "angle")?;
        let omega = field(ctx, imu, "rate")?;
        let (x, v) = match ctx.latest("odometry")? {
            Some(m) => (field(ctx, m, "x")?, field(ctx, m, "v")?),
            None => (0.0, 0.0),
        };
        let (x_ref, v_ref) = match ctx.latest("velocity_cmd")? {
            Some(m) => (field(ctx, m, "x_ref")?, field(ctx, m, "v_ref")?),
            None => (0.0, 0.0),
        };
        let k = self.k;
        let acc = k.k_theta * theta + k.k_omega * omega + k.k_x * (x - x_ref) + k.k_v * (v - v_ref);
        // Velocity to reach by the next activation.
        let v_cmd = (v + acc * self.dt).clamp(-self.v_max, self.v_max);
        publish_values(ctx, "balance_cmd", &[v_cmd])
    }
}

/// First-order low-pass `y <- y + alpha (u - y)` over every field of the
/// input; the first sample initializes the state.
pub struct LowPass {
    alpha: f64,
    input: String,
    output: String,
    state: Option<Vec<f64>>,
}

impl LowPass {
    pub fn new(alpha: f64, input: impl Into<String>, output: impl Into<String>) -> LowPass {
        LowPass {
            alpha,
            input: input.into(),
            output: output.into(),
            state: None,
        }
    }

    pub fn filter(&mut self, u: &[f64]) -> Vec<f64> {
        let alpha = self.alpha;
        let y = match self.state.take() {
            Some(y) => y.iter().zip(u).map(|(y, u)| y + alpha * (u - y)).collect(),
            None => u.to_vec(),
        };
        self.state = Some(y.clone());
        y
    }
}

impl Behavior for LowPass {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let Some(u) = ctx.latest(&self.input)?.map(Message::to_f64s) else {
            return Ok(());
        };
        let y = self.filter(&u);
        let output = self.output.clone();
        publish_values(ctx, &output, &y)
    }
}

/// Generic discrete PID on the wheel velocity, with a tilt cutoff that
/// idles the motor once the robot has fallen.
pub struct Pid {
    gains: Gains,
    dt: f64,
    integral: f64,
    prev_error: Option<f64>,
}

impl Behavior for Pid {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let g = &self.gains;
        let tilted = match ctx.latest("imu_filtered")? {
            Some(m) => field(ctx, m, "angle")?.abs() > g.tilt_cutoff,
            None => false,
        };
        let setpoint = match ctx.latest("balance_cmd")? {
            Some(m) => field(ctx, m, "v")?,
            None => 0.0,
        };
        let measured = match ctx.latest("odometry")? {
            Some(m) => field(ctx, m, "v")?,
            None => 0.0,
        };
        let e = setpoint - measured;
        self.integral += e * self.dt;
        let d = self.prev_error.map_or(0.0, |p| (e - p) / self.dt);
        self.prev_error = Some(e);
        let u = if tilted {
            0.0
        } else {
            (g.kp * e + g.ki * self.integral + g.kd * d).clamp(-g.u_max, g.u_max)
        };
        publish_values(ctx, "motor_cmd", &[u])
    }
}

/// Samples the plant: pitch angle and noisy gyro rate.
pub struct ImuInterface {
    plant: PlantHandle,
}

impl Behavior for ImuInterface {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let (angle, rate) = {
            let mut p = self.plant.borrow_mut();
            p.advance_to(ctx.now_us());
            (p.state().theta, p.read_gyro())
        };
        publish_values(ctx, "imu_raw", &[angle, rate])
    }
}

/// Applies the latest wheel torque command and reports wheel odometry. The
/// wheel torque reacts on the body with the opposite sign.
pub struct MotorInterface {
    plant: PlantHandle,
}

impl Behavior for MotorInterface {
    fn on_thread(&mut self, ctx: &mut Context<'_>, _thread: &str) -> Result<(), RuntimeError> {
        let u = match ctx.latest("motor_cmd")? {
            Some(m) => field(ctx, m, "u")?,
            None => 0.0,
        };
        let s = {
            let mut p = self.plant.borrow_mut();
            p.advance_to(ctx.now_us());
            p.set_input(-u);
            p.state()
        };
        publish_values(ctx, "odometry", &[s.x, s.v])
    }
}

/// Maximum reference speed of `movement` in m/s.
pub const MOVEMENT_MAX_SPEED: f64 = 0.2;

/// Registry with all robot behaviors bound to one plant.
pub fn robot_registry(
    gains: &Gains,
    plant_params: &PlantParams,
    waypoints: &[f64],
    plant: &PlantHandle,
) -> BehaviorRegistry {
    let mut r = BehaviorRegistry::new();
    let wps = waypoints.to_vec();
    r.register("navigation", move |_| {
        Box::new(Navigation {
            waypoints: wps.clone(),
            next: 0,
        })
    });
    r.register("movement", |spec| {
        Box::new(Movement {
            x_ref: 0.0,
            max_speed: MOVEMENT_MAX_SPEED,
            dt: period_s(spec),
        })
    });
    let k = BalanceGains::place(plant_params.a, plant_params.l, gains.balance_pole, gains.position_pole);
    let v_max = gains.v_max;
    r.register("maintain_position", move |spec| {
        Box::new(MaintainPosition {
            k,
            v_max,
            dt: period_s(spec),
        })
    });
    let alpha = gains.alpha;
    r.register("lowpass", move |_| Box::new(LowPass::new(alpha, "imu_raw", "imu_filtered")));
    let g = gains.clone();
    r.register("pid", move |spec| {
        Box::new(Pid {
            gains: g.clone(),
            dt: period_s(spec),
            integral: 0.0,
            prev_error: None,
        })
    });
    let p = plant.clone();
    r.register("imu_iface", move |_| Box::new(ImuInterface { plant: p.clone() }));
    let p = plant.clone();
    r.register("motor_iface", move |_| Box::new(MotorInterface { plant: p.clone() }));
    r
}
