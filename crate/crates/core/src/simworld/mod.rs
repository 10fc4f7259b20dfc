//! Deterministic, seeded ground-truth simulator of a planar legged robot
//! with terrain-dependent dynamics.
//!
//! The simulator stands in for the physical robot, motion capture, and
//! camera: [`step`] advances a hidden [`WorldState`], [`observe`] exports
//! the 24-element observation the learning pipeline consumes, and
//! [`terrain::render_patch`] produces synthetic terrain imagery.

mod path;
pub mod terrain;

pub use path::{make_path, PathKind, Waypoints};
pub use terrain::{render_patch, ImagePatch, TerrainParams};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, wrap_phase};

/// Robot and integrator constants, loaded from the shared JSON config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Effective leg radius (m): forward speed per rad/s of mean leg speed.
    pub r_leg: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// First-order lag constant of realized leg velocity (s).
    pub tau_leg: f64,
    /// First-order lag constant of body speed toward its traction target (s).
    pub v_body_tau: f64,
    /// Yaw rate per rad/s of left/right leg-speed differential.
    pub k_turn: f64,
    /// Realized leg speed per unit PWM at nominal battery voltage.
    pub pwm_gain: f64,
    /// Leg-phase modulation of the PWM gain (kappa).
    pub pwm_phase_ripple: f64,
    pub v_nominal: f64,
    pub battery_init: f64,
    pub battery_decay_per_s: f64,
    /// Back-EMF signal per rad/s of realized leg velocity.
    pub k_bemf: f64,
    /// Bound on the roll oscillation amplitude (rad).
    pub roll_max: f64,
    /// Roll amplitude per rad/s of mean leg speed, per unit of terrain
    /// roll gain.
    pub roll_amp_coeff: f64,
    pub pitch_amp_ratio: f64,
    pub pitch_freq_ratio: f64,
    /// Lower bound of the hidden per-run drive-condition gain; each
    /// rollout draws a gain in [unit_gain_min, 1] reflecting battery and
    /// assembly variation.
    pub unit_gain_min: f64,
    /// Euler sub-steps per `step` call.
    pub substeps: u32,
    /// Default action abstraction for data collection and MPC execution.
    pub abstraction: ActionKind,
}

/// The two action abstractions the robot accepts.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// Left/right leg velocity setpoints in rad/s, tracked by the leg lag.
    VelocitySetpoint,
    /// Raw motor PWM in [-1, 1]; realized speed depends on battery level
    /// and leg phase.
    DirectPwm,
}

/// Per-side leg command.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Action {
    pub left: f64,
    pub right: f64,
    pub kind: ActionKind,
}

impl Action {
    pub fn new(left: f64, right: f64, kind: ActionKind) -> Self {
        Self { left, right, kind }
    }

    /// Check the command against the bounds of its abstraction.
    pub fn validate(&self, sim: &SimParams) -> Result<()> {
        if !self.left.is_finite() || !self.right.is_finite() {
            return Err(Error::NonFinite("action".into()));
        }
        let (lo, hi) = action_bounds(self.kind, sim);
        for v in [self.left, self.right] {
            if v < lo - 1e-12 || v > hi + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "action value {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Valid command range for an abstraction.
pub fn action_bounds(kind: ActionKind, sim: &SimParams) -> (f64, f64) {
    match kind {
        ActionKind::VelocitySetpoint => (sim.omega_min, sim.omega_max),
        ActionKind::DirectPwm => (-1.0, 1.0),
    }
}

/// Hidden simulator state. [`observe`] derives the exported 24-vector
/// from it.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub x: f64,
    pub y: f64,
    /// Heading, CCW-positive, wrapped to (-pi, pi].
    pub yaw: f64,
    /// Body-forward speed (m/s).
    pub v_body: f64,
    pub omega_z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    /// Leg crank phases in [0, 2*pi).
    pub leg_phase_l: f64,
    pub leg_phase_r: f64,
    /// Realized leg velocities (rad/s).
    pub leg_vel_l: f64,
    pub leg_vel_r: f64,
    pub battery_v: f64,
    /// Hidden drive-condition gain of this robot for this run, in
    /// [unit_gain_min, 1].
    pub unit_gain: f64,
    pub t: f64,
}

impl WorldState {
    /// Resting pose at the origin with a full battery.
    pub fn initial(sim: &SimParams) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            v_body: 0.0,
            omega_z: 0.0,
            roll: 0.0,
            pitch: 0.0,
            roll_rate: 0.0,
            pitch_rate: 0.0,
            leg_phase_l: 0.0,
            leg_phase_r: 0.0,
            leg_vel_l: 0.0,
            leg_vel_r: 0.0,
            battery_v: sim.battery_init,
            unit_gain: 1.0,
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.yaw,
            self.v_body,
            self.omega_z,
            self.roll,
            self.pitch,
            self.roll_rate,
            self.pitch_rate,
            self.leg_phase_l,
            self.leg_phase_r,
            self.leg_vel_l,
            self.leg_vel_r,
            self.battery_v,
            self.unit_gain,
            self.t,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Reference control interval (s) at which `slip_sigma` is calibrated.
pub const REF_STEP_S: f64 = 0.1;

/// Resolution of recorded observations and commands: 2^-18 of a unit.
///
/// Recording on a power-of-two grid makes every recorded value, every
/// state difference, and every f32 reconstruction exact (values stay
/// within 2^24 grid steps), so datasets are self-consistent bitwise.
pub const RECORD_QUANTUM: f64 = 1.0 / (1u64 << 18) as f64;

/// Snap a value to the recording grid.
pub fn quantize_record(v: f64) -> f64 {
    debug_assert!(v.abs() < 60.0, "recorded value {v} outside the grid range");
    (v / RECORD_QUANTUM).round() * RECORD_QUANTUM
}

/// Advance the world by one control step of length `dt`.
///
/// Integrates `sim.substeps` explicit-Euler sub-steps. Exactly one slip
/// draw is taken from `rng` per call (scaled by the terrain's
/// `slip_sigma`), so terrains that differ only in coefficients see the
/// same noise sequence.
pub fn step(
    ws: &WorldState,
    action: &Action,
    terrain: &TerrainParams,
    sim: &SimParams,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<WorldState> {
    if !ws.is_finite() {
        return Err(Error::NonFinite("world state".into()));
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    action.validate(sim)?;
    terrain.validate()?;

    // One slip draw per step, spread over the sub-steps as a constant
    // rate. The noise diffuses with sqrt(dt), calibrated so a step at the
    // reference control interval gets yaw noise of std exactly slip_sigma
    // at rest; pushing the legs hard multiplies the slip.
    let z: f64 = StandardNormal.sample(rng);
    let base_noise_rate = terrain.slip_sigma * (dt / REF_STEP_S).sqrt() * z / dt;

    let n = sim.substeps.max(1);
    let h = dt / n as f64;
    let mut s = ws.clone();

    for _ in 0..n {
        // Target leg velocity for this abstraction; realized velocity
        // approaches it through the leg lag.
        let (tl, tr) = match action.kind {
            ActionKind::VelocitySetpoint => (action.left, action.right),
            ActionKind::DirectPwm => {
                let g = sim.pwm_gain * (s.battery_v / sim.v_nominal);
                (
                    action.left * g * (1.0 + sim.pwm_phase_ripple * s.leg_phase_l.sin()),
                    action.right * g * (1.0 + sim.pwm_phase_ripple * s.leg_phase_r.sin()),
                )
            }
        };
        let tl = tl.clamp(-sim.omega_max, sim.omega_max);
        let tr = tr.clamp(-sim.omega_max, sim.omega_max);
        let alpha = (h / sim.tau_leg).min(1.0);
        s.leg_vel_l += (tl - s.leg_vel_l) * alpha;
        s.leg_vel_r += (tr - s.leg_vel_r) * alpha;

        let mean_vel = 0.5 * (s.leg_vel_l + s.leg_vel_r);
        let mean_speed = 0.5 * (s.leg_vel_l.abs() + s.leg_vel_r.abs());
        // Body speed lags toward the traction-scaled drive target.
        let v_target = s.unit_gain * terrain.traction_fwd * sim.r_leg * mean_vel;
        let v_body = s.v_body + (v_target - s.v_body) * (h / sim.v_body_tau).min(1.0);

        // Turning traction degrades with leg speed, and the response to
        // the differential saturates where the surface breaks away.
        let diff = s.leg_vel_r - s.leg_vel_l;
        let degrade = (1.0 - terrain.turn_degrade * mean_speed / sim.omega_max).max(0.05);
        let response = diff / (1.0 + diff.abs() / terrain.turn_sat);
        let turn_rate = s.unit_gain * terrain.traction_turn * degrade * sim.k_turn * response;

        // Roll oscillation couples into yaw proportionally to forward speed.
        let osc = (TAU * terrain.roll_freq * s.t).sin();
        let yaw_rate = turn_rate + terrain.roll_gain * osc * v_body + base_noise_rate;

        s.x += v_body * s.yaw.cos() * h;
        s.y += v_body * s.yaw.sin() * h;
        s.yaw = wrap_angle(s.yaw + yaw_rate * h);

        s.leg_phase_l = wrap_phase(s.leg_phase_l + s.leg_vel_l * h);
        s.leg_phase_r = wrap_phase(s.leg_phase_r + s.leg_vel_r * h);

        // Bounded roll/pitch oscillation driven by mean leg speed. The
        // oscillation state itself is terrain-independent; terrain enters
        // through the yaw coupling above.
        let t_next = s.t + h;
        let amp = (sim.roll_amp_coeff * mean_speed).min(sim.roll_max);
        let roll_next = amp * (TAU * terrain.roll_freq * t_next).sin();
        s.roll_rate = (roll_next - s.roll) / h;
        s.roll = roll_next;
        let pitch_next = amp
            * sim.pitch_amp_ratio
            * (TAU * terrain.roll_freq * sim.pitch_freq_ratio * t_next).sin();
        s.pitch_rate = (pitch_next - s.pitch) / h;
        s.pitch = pitch_next;

        s.battery_v = (s.battery_v - sim.battery_decay_per_s * h).max(3.0);
        s.v_body = v_body;
        s.omega_z = yaw_rate;
        s.t = t_next;
    }

    Ok(s)
}

/// Indices into the exported 24-element observation vector.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const VZ: usize = 5;
    pub const COS_ROLL: usize = 6;
    pub const SIN_ROLL: usize = 7;
    pub const COS_PITCH: usize = 8;
    pub const SIN_PITCH: usize = 9;
    pub const COS_YAW: usize = 10;
    pub const SIN_YAW: usize = 11;
    pub const WX: usize = 12;
    pub const WY: usize = 13;
    pub const WZ: usize = 14;
    pub const COS_AL: usize = 15;
    pub const SIN_AL: usize = 16;
    pub const COS_AR: usize = 17;
    pub const SIN_AR: usize = 18;
    pub const V_AL: usize = 19;
    pub const V_AR: usize = 20;
    pub const BEMF_L: usize = 21;
    pub const BEMF_R: usize = 22;
    pub const V_BAT: usize = 23;
}

/// Number of observation dimensions.
pub const STATE_DIM: usize = 24;

/// The (cos, sin) index pairs inside the observation vector.
pub const ANGLE_PAIRS: [(usize, usize); 5] = [
    (idx::COS_ROLL, idx::SIN_ROLL),
    (idx::COS_PITCH, idx::SIN_PITCH),
    (idx::COS_YAW, idx::SIN_YAW),
    (idx::COS_AL, idx::SIN_AL),
    (idx::COS_AR, idx::SIN_AR),
];

/// The 24-element robot observation: positions, world-frame velocities,
/// (cos, sin) attitude and leg-phase encodings, angular rates, leg
/// velocities, back-EMF signals, and battery voltage.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn zeros() -> Self {
        StateVector([0.0; STATE_DIM])
    }

    pub fn pos(&self) -> (f64, f64) {
        (self.0[idx::X], self.0[idx::Y])
    }

    pub fn yaw(&self) -> f64 {
        self.0[idx::SIN_YAW].atan2(self.0[idx::COS_YAW])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Rescale every (cos, sin) pair to unit norm. Pairs with a degenerate
    /// norm are left untouched.
    pub fn renormalize_angle_pairs(&mut self) {
        for (c, s) in ANGLE_PAIRS {
            let n = (self.0[c] * self.0[c] + self.0[s] * self.0[s]).sqrt();
            if n > 1e-9 {
                self.0[c] /= n;
                self.0[s] /= n;
            }
        }
    }

    /// Copy with every component snapped to the recording grid (see
    /// [`RECORD_QUANTUM`]).
    pub fn quantize_recorded(&self) -> Self {
        let mut out = [0.0; STATE_DIM];
        for (o, v) in out.iter_mut().zip(self.0.iter()) {
            *o = quantize_record(*v);
        }
        StateVector(out)
    }
}

/// Export the observation vector for a world state.
pub fn observe(ws: &WorldState, sim: &SimParams) -> Result<StateVector> {
    if !ws.is_finite() {
        return Err(Error::NonFinite("world state".into()));
    }
    let mut s = [0.0; STATE_DIM];
    s[idx::X] = ws.x;
    s[idx::Y] = ws.y;
    s[idx::Z] = 0.0;
    s[idx::VX] = ws.v_body * ws.yaw.cos();
    s[idx::VY] = ws.v_body * ws.yaw.sin();
    s[idx::VZ] = 0.0;
    s[idx::COS_ROLL] = ws.roll.cos();
    s[idx::SIN_ROLL] = ws.roll.sin();
    s[idx::COS_PITCH] = ws.pitch.cos();
    s[idx::SIN_PITCH] = ws.pitch.sin();
    s[idx::COS_YAW] = ws.yaw.cos();
    s[idx::SIN_YAW] = ws.yaw.sin();
    s[idx::WX] = ws.roll_rate;
    s[idx::WY] = ws.pitch_rate;
    s[idx::WZ] = ws.omega_z;
    s[idx::COS_AL] = ws.leg_phase_l.cos();
    s[idx::SIN_AL] = ws.leg_phase_l.sin();
    s[idx::COS_AR] = ws.leg_phase_r.cos();
    s[idx::SIN_AR] = ws.leg_phase_r.sin();
    s[idx::V_AL] = ws.leg_vel_l;
    s[idx::V_AR] = ws.leg_vel_r;
    s[idx::BEMF_L] = sim.k_bemf * ws.leg_vel_l;
    s[idx::BEMF_R] = sim.k_bemf * ws.leg_vel_r;
    s[idx::V_BAT] = ws.battery_v;
    Ok(StateVector(s))
}
