//! Differential-drive baseline: a heading/offset waypoint controller at
//! 10 Hz layered over a discrete PID leg-velocity loop that emulates the
//! 1 kHz firmware stage.
//!
//! The waypoint controller finds the closest path segment, biases the
//! desired heading by the perpendicular offset (more when right of the
//! line, less when left), and converts the wrapped heading error into a
//! leg-speed differential around a nominal speed.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::wrap_angle;
use crate::mpc::{path_cost, ClosedLoopRun, MpcConfig};
use crate::rng::stream;
use crate::simworld::{
    observe, step, Action, ActionKind, SimParams, StateVector, TerrainParams, Waypoints,
    WorldState,
};

/// PID ticks per waypoint-controller tick (1 kHz / 10 Hz).
pub const PID_TICKS_PER_CONTROL: usize = 100;

/// Waypoint-controller parameters.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct DDParams {
    /// Heading bias per meter of perpendicular offset (rad/m).
    pub f1: f64,
    /// Leg-speed differential per radian of heading error.
    pub f2: f64,
    /// Nominal leg speed (rad/s).
    pub omega_nom: f64,
}

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup clamp on the accumulated error (rad/s * s).
    pub integral_limit: f64,
}

/// The `ddrive` section of the shared config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdriveConfig {
    pub f1: f64,
    pub f2: f64,
    pub omega_nom: f64,
    pub pid: PidGains,
}

impl DdriveConfig {
    pub fn params(&self) -> DDParams {
        DDParams {
            f1: self.f1,
            f2: self.f2,
            omega_nom: self.omega_nom,
        }
    }
}

/// Discrete PID controller state. Output is PWM in [-1, 1].
#[derive(Clone, Debug)]
pub struct PidState {
    pub gains: PidGains,
    pub integral: f64,
    pub prev_error: f64,
}

impl PidState {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_error: 0.0,
        }
    }
}

/// Which side of the directed segment the robot sits on.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    On,
}

/// Result of projecting a point onto the closest path segment.
#[derive(Clone, Debug)]
pub struct SegmentHit {
    pub index: usize,
    /// Heading of the segment (rad).
    pub d_line: f64,
    /// Distance to the segment, endpoints clamped (m).
    pub p_dist: f64,
    pub side: Side,
    /// Arc-length coordinate of the projection along the whole path (m).
    pub arc: f64,
}

const SIDE_EPS: f64 = 1e-12;

/// Closest segment to `p`, with distance measured to the clamped segment.
/// Ties between adjacent segments break toward the later segment.
pub fn closest_segment(p: (f64, f64), w: &Waypoints) -> SegmentHit {
    let mut best: Option<(f64, SegmentHit)> = None;
    let mut prefix = 0.0;
    for i in 0..w.segment_count() {
        let (a, b) = w.segment(i);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let len = len2.sqrt();
        let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
        let proj = (a.0 + t * dx, a.1 + t * dy);
        let d = crate::geom::dist(p, proj);
        if best.as_ref().map_or(true, |(bd, _)| d <= *bd) {
            // Signed perpendicular offset of p from the infinite line:
            // negative cross product of segment direction with the robot
            // offset means the robot is right of the segment.
            let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
            let perp = cross / len;
            let side = if perp > SIDE_EPS {
                Side::Left
            } else if perp < -SIDE_EPS {
                Side::Right
            } else {
                Side::On
            };
            best = Some((
                d,
                SegmentHit {
                    index: i,
                    d_line: dy.atan2(dx),
                    p_dist: d,
                    side,
                    arc: prefix + t * len,
                },
            ));
        }
        prefix += len;
    }
    best.expect("waypoints have at least one segment").1
}

/// Waypoint-following control law: leg velocity setpoints from the robot
/// pose and the desired path, clamped to the actuator range.
pub fn dd_control(
    s: &StateVector,
    w: &Waypoints,
    params: &DDParams,
    sim: &SimParams,
) -> (f64, f64) {
    let hit = closest_segment(s.pos(), w);
    let d = match hit.side {
        Side::Right => hit.d_line + params.f1 * hit.p_dist,
        Side::Left => hit.d_line - params.f1 * hit.p_dist,
        Side::On => hit.d_line,
    };
    let delta = wrap_angle(d - s.yaw());
    let wl = (params.omega_nom - delta * params.f2).clamp(sim.omega_min, sim.omega_max);
    let wr = (params.omega_nom + delta * params.f2).clamp(sim.omega_min, sim.omega_max);
    (wl, wr)
}

/// One tick of the discrete PID loop. Integral accumulation is skipped
/// while the output is saturated in the direction of the error.
pub fn pid_update(st: &PidState, setpoint: f64, measured: f64, dt: f64) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let g = st.gains;
    let e = setpoint - measured;
    let tentative = (st.integral + e * dt).clamp(-g.integral_limit, g.integral_limit);
    let unsat = g.kp * e + g.ki * tentative + g.kd * (e - st.prev_error) / dt;
    let out = unsat.clamp(-1.0, 1.0);
    let saturated_further = (unsat > 1.0 && e > 0.0) || (unsat < -1.0 && e < 0.0);
    let integral = if saturated_further { st.integral } else { tentative };
    (
        out,
        PidState {
            gains: g,
            integral,
            prev_error: e,
        },
    )
}

/// Closed-loop baseline rollout: `dd_control` at the control rate,
/// `pid_update` at 1 kHz driving the simulator with direct PWM. Cost is
/// the same path cost the MPC reports.
#[allow(clippy::too_many_arguments)]
pub fn dd_rollout(
    sim: &SimParams,
    terrain: &TerrainParams,
    path: &Waypoints,
    params: &DDParams,
    pid: &PidGains,
    cost_cfg: &MpcConfig,
    start: &WorldState,
    duration_s: f64,
    seed: u64,
) -> Result<ClosedLoopRun> {
    let control_dt = cost_cfg.dt;
    let steps = (duration_s / control_dt).round() as usize;
    if steps == 0 {
        return Ok(ClosedLoopRun::empty());
    }
    let pid_dt = control_dt / PID_TICKS_PER_CONTROL as f64;
    let mut rng = stream(seed, 0);
    let mut ws = start.clone();
    let mut pid_l = PidState::new(*pid);
    let mut pid_r = PidState::new(*pid);
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    states.push(observe(&ws, sim)?);
    for _ in 0..steps {
        let s = observe(&ws, sim)?;
        let (wl, wr) = dd_control(&s, path, params, sim);
        for _ in 0..PID_TICKS_PER_CONTROL {
            let (pl, nl) = pid_update(&pid_l, wl, ws.leg_vel_l, pid_dt);
            let (pr, nr) = pid_update(&pid_r, wr, ws.leg_vel_r, pid_dt);
            pid_l = nl;
            pid_r = nr;
            let a = Action::new(pl, pr, ActionKind::DirectPwm);
            ws = step(&ws, &a, terrain, sim, pid_dt, &mut rng)?;
        }
        actions.push(Action::new(wl, wr, ActionKind::VelocitySetpoint));
        states.push(observe(&ws, sim)?);
    }
    let cost = path_cost(&states, path, cost_cfg);
    Ok(ClosedLoopRun {
        states,
        actions,
        cost,
        disqualified_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::simworld::{idx, make_path, PathKind};

    fn cfg() -> Config {
        Config::default()
    }

    fn state_at(x: f64, y: f64, yaw: f64) -> StateVector {
        let mut s = StateVector::zeros();
        s.0[idx::X] = x;
        s.0[idx::Y] = y;
        s.0[idx::COS_ROLL] = 1.0;
        s.0[idx::COS_PITCH] = 1.0;
        s.0[idx::COS_YAW] = yaw.cos();
        s.0[idx::SIN_YAW] = yaw.sin();
        s.0[idx::COS_AL] = 1.0;
        s.0[idx::COS_AR] = 1.0;
        s
    }

    #[test]
    fn closest_segment_axis_aligned() {
        let w = Waypoints::new(vec![(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let hit = closest_segment((0.0, 1.0), &w);
        assert_eq!(hit.d_line, 0.0);
        assert!((hit.p_dist - 1.0).abs() < 1e-12);
        assert_eq!(hit.side, Side::Left);

        let hit = closest_segment((12.0, 0.0), &w);
        assert!((hit.p_dist - 2.0).abs() < 1e-12, "endpoint clamp");
        assert_eq!(hit.side, Side::On);

        let hit = closest_segment((5.0, -3.0), &w);
        assert_eq!(hit.side, Side::Right);
        assert!((hit.p_dist - 3.0).abs() < 1e-12);
    }

    #[test]
    fn closest_segment_tie_prefers_later() {
        let w = Waypoints::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]).unwrap();
        // The shared corner is equidistant from both segments.
        let hit = closest_segment((1.0, 0.0), &w);
        assert_eq!(hit.index, 1);
        assert!((hit.arc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dd_control_zero_error_fixed_point() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let p = c.ddrive.params();
        let (wl, wr) = dd_control(&state_at(0.5, 0.0, 0.0), &w, &p, &c.sim);
        assert!((wl - p.omega_nom).abs() < 1e-12);
        assert!((wr - p.omega_nom).abs() < 1e-12);
    }

    #[test]
    fn dd_control_right_of_line_turns_left() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let p = DDParams {
            f1: 3.0,
            f2: 2.0,
            omega_nom: 8.0,
        };
        // Right of a +x line by 0.1 m, yaw 0: delta = f1 * p = 0.3.
        let (wl, wr) = dd_control(&state_at(5.0, -0.1, 0.0), &w, &p, &c.sim);
        assert!(wr > wl, "must speed up the right side to turn back left");
        assert!((wr - wl - 2.0 * 0.3 * p.f2).abs() < 1e-9);
    }

    #[test]
    fn dd_control_mirror_symmetry() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let p = c.ddrive.params();
        let (wl_r, wr_r) = dd_control(&state_at(5.0, -0.2, 0.0), &w, &p, &c.sim);
        let (wl_l, wr_l) = dd_control(&state_at(5.0, 0.2, 0.0), &w, &p, &c.sim);
        assert!((wl_r - wr_l).abs() < 1e-9);
        assert!((wr_r - wl_l).abs() < 1e-9);
    }

    #[test]
    fn dd_control_differential_sums_to_nominal_pair() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        // Small f2 keeps outputs away from the clamp.
        let p = DDParams {
            f1: 1.0,
            f2: 0.5,
            omega_nom: 8.0,
        };
        for y in [-0.4, -0.1, 0.0, 0.2, 0.5] {
            let (wl, wr) = dd_control(&state_at(3.0, y, 0.3), &w, &p, &c.sim);
            assert!((wl + wr - 2.0 * p.omega_nom).abs() < 1e-9);
        }
    }

    #[test]
    fn dd_control_rigid_transform_equivariance() {
        let c = cfg();
        let p = c.ddrive.params();
        let mut rng = crate::rng::stream(77, 0);
        use rand::Rng;
        for _ in 0..50 {
            let pts: Vec<(f64, f64)> = vec![
                (0.0, 0.0),
                (rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0f64)),
                (rng.gen_range(2.0..4.0), rng.gen_range(-1.0..1.0f64)),
            ];
            let w = Waypoints::new(pts.clone()).unwrap();
            let (x, y, yaw) = (
                rng.gen_range(-1.0..3.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-3.0..3.0),
            );
            let base = dd_control(&state_at(x, y, yaw), &w, &p, &c.sim);

            let (tx, ty, th): (f64, f64, f64) = (
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-3.0..3.0),
            );
            let rot = |q: (f64, f64)| {
                (
                    q.0 * th.cos() - q.1 * th.sin() + tx,
                    q.0 * th.sin() + q.1 * th.cos() + ty,
                )
            };
            let wt = Waypoints::new(pts.iter().map(|q| rot(*q)).collect()).unwrap();
            let (xp, yp) = rot((x, y));
            let moved = dd_control(&state_at(xp, yp, yaw + th), &wt, &p, &c.sim);
            assert!((base.0 - moved.0).abs() < 1e-9, "left output not equivariant");
            assert!((base.1 - moved.1).abs() < 1e-9, "right output not equivariant");
        }
    }

    #[test]
    fn pid_zero_error_outputs_zero() {
        let c = cfg();
        let mut st = PidState::new(c.ddrive.pid);
        for _ in 0..10 {
            let (out, next) = pid_update(&st, 5.0, 5.0, 0.001);
            assert_eq!(out, 0.0);
            st = next;
        }
    }

    #[test]
    fn pid_pure_proportional() {
        let gains = PidGains {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
            integral_limit: 1.0,
        };
        let st = PidState::new(gains);
        let (out, _) = pid_update(&st, 1.0, 0.5, 0.001);
        assert!((out - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pid_tracks_leg_lag_within_five_percent() {
        // Closed loop against the simulated leg dynamics: constant
        // setpoint reached within 0.5 s for the shipped default gains.
        let c = cfg();
        let mut t = c.terrains[0].clone();
        t.slip_sigma = 0.0;
        let mut ws = WorldState::initial(&c.sim);
        let mut rng = stream(0, 0);
        let setpoint = 8.0;
        let mut st = PidState::new(c.ddrive.pid);
        let dt = 1e-3;
        let mut tsim = 0.0;
        while tsim < 0.5 {
            let (pwm, next) = pid_update(&st, setpoint, ws.leg_vel_l, dt);
            st = next;
            let a = Action::new(pwm, pwm, ActionKind::DirectPwm);
            ws = step(&ws, &a, &t, &c.sim, dt, &mut rng).unwrap();
            tsim += dt;
        }
        let err = (setpoint - ws.leg_vel_l).abs();
        assert!(
            err < 0.05 * setpoint,
            "steady-state error {err:.3} rad/s exceeds 5% of {setpoint}"
        );
    }

    #[test]
    fn dd_rollout_zero_duration_is_empty() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let run = dd_rollout(
            &c.sim,
            &c.terrains[0],
            &w,
            &c.ddrive.params(),
            &c.ddrive.pid,
            &c.mpc,
            &WorldState::initial(&c.sim),
            0.0,
            1,
        )
        .unwrap();
        assert!(run.states.is_empty());
        assert_eq!(run.cost, 0.0);
    }

    #[test]
    fn dd_rollout_is_seed_deterministic() {
        let c = cfg();
        let w = make_path(PathKind::Left, 1.0).unwrap();
        let start = WorldState::initial(&c.sim);
        let a = dd_rollout(
            &c.sim,
            &c.terrains[2],
            &w,
            &c.ddrive.params(),
            &c.ddrive.pid,
            &c.mpc,
            &start,
            2.0,
            13,
        )
        .unwrap();
        let b = dd_rollout(
            &c.sim,
            &c.terrains[2],
            &w,
            &c.ddrive.params(),
            &c.ddrive.pid,
            &c.mpc,
            &start,
            2.0,
            13,
        )
        .unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.0.map(f64::to_bits), y.0.map(f64::to_bits));
        }
    }

    #[test]
    fn dd_rollout_straight_path_low_speed_tracks() {
        // Tuned default gains on the high-traction preset keep the final
        // perpendicular error under 5 cm on the straight path.
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let mut params = c.ddrive.params();
        params.omega_nom = 6.0;
        let turf = c.terrains.iter().position(|t| t.name == "turf").unwrap();
        let run = dd_rollout(
            &c.sim,
            &c.terrains[turf],
            &w,
            &params,
            &c.ddrive.pid,
            &c.mpc,
            &WorldState::initial(&c.sim),
            5.0,
            3,
        )
        .unwrap();
        let last = run.states.last().unwrap();
        let hit = closest_segment(last.pos(), &w);
        assert!(
            hit.p_dist < 0.05,
            "final perpendicular error {:.4} m too large",
            hit.p_dist
        );
    }

    #[test]
    fn dd_pulls_back_to_line_monotonically_at_low_speed() {
        let c = cfg();
        let mut t = c.terrains[0].clone();
        t.slip_sigma = 0.0;
        t.roll_gain = 0.0;
        let w = make_path(PathKind::Straight, 4.0).unwrap();
        let mut params = c.ddrive.params();
        params.omega_nom = 5.0;
        let mut start = WorldState::initial(&c.sim);
        start.y = 0.3;
        let run = dd_rollout(
            &c.sim, &t, &w, &params, &c.ddrive.pid, &c.mpc, &start, 6.0, 5,
        )
        .unwrap();
        let dists: Vec<f64> = run
            .states
            .iter()
            .map(|s| closest_segment(s.pos(), &w).p_dist)
            .collect();
        // After the initial transient the offset must not grow again.
        let tail = &dists[dists.len() / 2..];
        for pair in tail.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6, "offset grew late in the run: {pair:?}");
        }
        assert!(*dists.last().unwrap() < 0.05);
    }
}
