//! Random-sampling shooting MPC: sample candidate action sequences, roll
//! them through the learned dynamics model, score with the path cost, and
//! execute the first action of the best sequence, replanning every step.

use serde::{Deserialize, Serialize};

use crate::ddrive::closest_segment;
use crate::dynmodel::DynModel;
use crate::error::{Error, Result};
use crate::features::{embed, one_hot, Embedding, FeatureConfig, ProjectionMatrix};
use crate::geom::wrap_angle;
use crate::linalg::Matrix;
use crate::rng::{derive, stream};
use crate::simworld::{
    action_bounds, observe, render_patch, step, Action, ActionKind, SimParams, StateVector,
    TerrainParams, Waypoints, WorldState,
};

/// Planner settings, from the shared config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Candidate action sequences sampled per step (K).
    pub candidates: usize,
    /// Planning horizon in steps (H).
    pub horizon: usize,
    /// Control interval (s).
    pub dt: f64,
    /// Weight on perpendicular distance from the path.
    pub f_p: f64,
    /// Weight on forward progress along the path (rewarded).
    pub f_f: f64,
    /// Weight on heading deviation from the segment direction.
    pub f_h: f64,
    /// Sampled-action box, intersected with the abstraction's valid range.
    pub action_low: f64,
    pub action_high: f64,
}

/// Path-relative pose summary entering the step cost.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PathGeometry {
    /// Perpendicular distance to the closest segment (m), >= 0.
    pub p: f64,
    /// Absolute wrapped heading deviation from the segment direction, in [0, pi].
    pub h: f64,
    /// Forward progress along the path since the previous sample (m).
    pub f: f64,
}

/// Geometry of a state relative to the path. `prev_arc` is the arc-length
/// coordinate of the previous sample; returns the new coordinate.
pub fn path_geometry(s: &StateVector, w: &Waypoints, prev_arc: f64) -> (PathGeometry, f64) {
    let hit = closest_segment(s.pos(), w);
    let h = wrap_angle(hit.d_line - s.yaw()).abs();
    (
        PathGeometry {
            p: hit.p_dist,
            h,
            f: hit.arc - prev_arc,
        },
        hit.arc,
    )
}

/// Eq-2-style step cost: penalize offset and heading deviation, reward
/// forward progress.
pub fn step_cost(g: &PathGeometry, cfg: &MpcConfig) -> f64 {
    cfg.f_p * g.p + cfg.f_h * g.h - cfg.f_f * g.f
}

/// Accumulated step cost of a realized or predicted state sequence.
/// Progress is measured incrementally between consecutive states, so the
/// progress terms telescope to net advance along the path.
pub fn path_cost(states: &[StateVector], w: &Waypoints, cfg: &MpcConfig) -> f64 {
    if states.len() < 2 {
        return 0.0;
    }
    let mut arc = closest_segment(states[0].pos(), w).arc;
    let mut total = 0.0;
    for s in &states[1..] {
        let (g, new_arc) = path_geometry(s, w, arc);
        total += step_cost(&g, cfg);
        arc = new_arc;
    }
    total
}

/// A closed-loop run: realized observations, executed actions, and the
/// accumulated path cost on the realized states.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub states: Vec<StateVector>,
    pub actions: Vec<Action>,
    pub cost: f64,
    /// Control steps during which at least one candidate was disqualified
    /// for a non-finite prediction.
    pub disqualified_steps: usize,
}

impl ClosedLoopRun {
    pub fn empty() -> Self {
        Self {
            states: Vec::new(),
            actions: Vec::new(),
            cost: 0.0,
            disqualified_steps: 0,
        }
    }
}

/// Effective sampling box: the configured box clipped to the valid range
/// of the action abstraction.
pub fn sampling_box(cfg: &MpcConfig, kind: ActionKind, sim: &SimParams) -> (f64, f64) {
    let (vlo, vhi) = action_bounds(kind, sim);
    (cfg.action_low.max(vlo), cfg.action_high.min(vhi))
}

/// Sample `K` candidate sequences of `H` actions, i.i.d. uniform over the
/// action box. Candidate `i` draws from the substream `(seed, i)`, so the
/// candidate set is independent of evaluation order.
pub fn sample_sequences(
    seed: u64,
    cfg: &MpcConfig,
    kind: ActionKind,
    sim: &SimParams,
) -> Vec<Vec<Action>> {
    use rand::Rng;
    let (lo, hi) = sampling_box(cfg, kind, sim);
    (0..cfg.candidates)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            (0..cfg.horizon)
                .map(|_| {
                    let left = rng.gen_range(lo..=hi);
                    let right = rng.gen_range(lo..=hi);
                    Action::new(left, right, kind)
                })
                .collect()
        })
        .collect()
}

/// Roll one candidate sequence through the model and accumulate its cost.
/// A non-finite prediction disqualifies the candidate with infinite cost.
pub fn evaluate_sequence(
    model: &DynModel,
    s0: &StateVector,
    seq: &[Action],
    e: Option<&Embedding>,
    w: &Waypoints,
    cfg: &MpcConfig,
) -> Result<(f64, Vec<StateVector>)> {
    let mut arc = closest_segment(s0.pos(), w).arc;
    let mut state = s0.clone();
    let mut cost = 0.0;
    let mut predicted = Vec::with_capacity(seq.len());
    for a in seq {
        let next = model.predict_next(&state, a, e)?;
        if !next.is_finite() {
            return Ok((f64::INFINITY, predicted));
        }
        let (g, new_arc) = path_geometry(&next, w, arc);
        cost += step_cost(&g, cfg);
        arc = new_arc;
        predicted.push(next.clone());
        state = next;
    }
    Ok((cost, predicted))
}

/// Cost of every candidate, evaluated with batched model passes. Produces
/// bit-identical costs to calling [`evaluate_sequence`] per candidate.
pub fn evaluate_candidates(
    model: &DynModel,
    s0: &StateVector,
    candidates: &[Vec<Action>],
    e: Option<&Embedding>,
    w: &Waypoints,
    cfg: &MpcConfig,
) -> Result<Vec<f64>> {
    let k = candidates.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let horizon = candidates[0].len();
    let arc0 = closest_segment(s0.pos(), w).arc;
    let mut states: Vec<StateVector> = vec![s0.clone(); k];
    let mut arcs = vec![arc0; k];
    let mut costs = vec![0.0f64; k];

    for h in 0..horizon {
        let mut rows = Vec::with_capacity(k * model.input_dim());
        for (i, cand) in candidates.iter().enumerate() {
            rows.extend_from_slice(&model.input_row(&states[i], &cand[h], e)?);
        }
        let inputs = Matrix::from_flat(k, model.input_dim(), rows);
        let deltas = model.forward_batch(&inputs)?;
        for i in 0..k {
            if costs[i].is_infinite() {
                continue;
            }
            let next = DynModel::apply_delta(&states[i], deltas.row(i));
            if !next.is_finite() {
                costs[i] = f64::INFINITY;
                continue;
            }
            let (g, new_arc) = path_geometry(&next, w, arcs[i]);
            costs[i] += step_cost(&g, cfg);
            arcs[i] = new_arc;
            states[i] = next;
        }
    }
    Ok(costs)
}

/// Index of the lowest-cost candidate; ties break toward the lowest
/// index. `None` when every candidate is disqualified.
pub fn select_best(costs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in costs.iter().enumerate() {
        if !c.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, bc)| c < bc) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-step planning diagnostics.
#[derive(Copy, Clone, Debug)]
pub struct StepDiag {
    pub chosen: usize,
    pub cost: f64,
    pub disqualified: usize,
}

/// One planning step: sample, evaluate, return the first action of the
/// argmin sequence.
#[allow(clippy::too_many_arguments)]
pub fn mpc_step(
    model: &DynModel,
    s: &StateVector,
    e: Option<&Embedding>,
    w: &Waypoints,
    cfg: &MpcConfig,
    kind: ActionKind,
    sim: &SimParams,
    seed: u64,
) -> Result<(Action, StepDiag)> {
    let candidates = sample_sequences(seed, cfg, kind, sim);
    let costs = evaluate_candidates(model, s, &candidates, e, w, cfg)?;
    let disqualified = costs.iter().filter(|c| c.is_infinite()).count();
    let best = select_best(&costs).ok_or_else(|| {
        Error::Planning(format!(
            "all {} candidates disqualified by non-finite predictions",
            costs.len()
        ))
    })?;
    Ok((
        candidates[best][0],
        StepDiag {
            chosen: best,
            cost: costs[best],
            disqualified,
        },
    ))
}

/// Where the conditioned model's embedding comes from at evaluation time.
pub enum EmbeddingProvider<'a> {
    /// Plain model: no embedding.
    None,
    /// Project the synthetic camera patch rendered at the rollout start.
    Projection(&'a ProjectionMatrix),
    /// Known terrain label.
    OneHot { index: usize, count: usize },
    /// Externally supplied embedding (e.g. from a precomputed file).
    Fixed(Embedding),
}

impl EmbeddingProvider<'_> {
    fn resolve(
        &self,
        model: &DynModel,
        terrain: &TerrainParams,
        start: &WorldState,
        feat: &FeatureConfig,
    ) -> Result<Option<Embedding>> {
        let Some(expected) = model.embed_dim() else {
            return Ok(None);
        };
        let e = match self {
            EmbeddingProvider::None => {
                return Err(Error::InvalidArgument(
                    "conditioned model requires an embedding provider".into(),
                ))
            }
            EmbeddingProvider::Projection(proj) => {
                let patch = render_patch(terrain, start, feat.patch_size)?;
                embed(&patch, proj)?
            }
            EmbeddingProvider::OneHot { index, count } => one_hot(*index, *count)?,
            EmbeddingProvider::Fixed(e) => e.clone(),
        };
        if e.dim() != expected {
            return Err(Error::DimMismatch {
                context: "embedding provider vs model".into(),
                expected,
                got: e.dim(),
            });
        }
        Ok(Some(e))
    }
}

/// Closed-loop MPC rollout at the control rate. The terrain embedding is
/// resolved once from the start-of-rollout observation and reused for
/// every step.
#[allow(clippy::too_many_arguments)]
pub fn mpc_rollout(
    sim: &SimParams,
    terrain: &TerrainParams,
    model: &DynModel,
    path: &Waypoints,
    cfg: &MpcConfig,
    feat: &FeatureConfig,
    provider: &EmbeddingProvider,
    start: &WorldState,
    duration_s: f64,
    seed: u64,
) -> Result<ClosedLoopRun> {
    let steps = (duration_s / cfg.dt).round() as usize;
    if steps == 0 {
        return Ok(ClosedLoopRun::empty());
    }
    let kind = sim.abstraction;
    let embedding = provider.resolve(model, terrain, start, feat)?;
    let mut rng = stream(seed, 0);
    let mut ws = start.clone();
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut disqualified_steps = 0;
    states.push(observe(&ws, sim)?);
    for k in 0..steps {
        let s = observe(&ws, sim)?;
        let plan_seed = derive(seed, 1 + k as u64);
        let (a, diag) = mpc_step(model, &s, embedding.as_ref(), path, cfg, kind, sim, plan_seed)?;
        if diag.disqualified > 0 {
            disqualified_steps += 1;
        }
        ws = step(&ws, &a, terrain, sim, cfg.dt, &mut rng)?;
        actions.push(a);
        states.push(observe(&ws, sim)?);
    }
    let cost = path_cost(&states, path, cfg);
    Ok(ClosedLoopRun {
        states,
        actions,
        cost,
        disqualified_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::dynmodel::{Activation, Layer, NormStats, Variant};
    use crate::simworld::{idx, make_path, PathKind, STATE_DIM};
    use std::f64::consts::PI;

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

    /// Model that predicts exactly zero delta.
    fn zero_model() -> DynModel {
        let in_dim = STATE_DIM + 2;
        let layers = vec![
            Layer::zeros(in_dim, 4, Activation::Relu),
            Layer::zeros(4, STATE_DIM, Activation::Linear),
        ];
        DynModel::from_parts(
            Variant::Plain,
            layers,
            NormStats::identity(in_dim, STATE_DIM),
        )
        .unwrap()
    }

    /// Hand-built model realizing `delta_x = gain * (a_l + a_r) / 2`,
    /// everything else zero, for pwm actions in [-1, 1].
    fn toy_forward_model(gain: f64) -> DynModel {
        let in_dim = STATE_DIM + 2;
        // Hidden pair: relu(u) and relu(-u) with u = (a_l + a_r) / 2.
        let mut l1 = Layer::zeros(in_dim, 2, Activation::Relu);
        l1.w.set(STATE_DIM, 0, 0.5);
        l1.w.set(STATE_DIM + 1, 0, 0.5);
        l1.w.set(STATE_DIM, 1, -0.5);
        l1.w.set(STATE_DIM + 1, 1, -0.5);
        let mut l2 = Layer::zeros(2, STATE_DIM, Activation::Linear);
        l2.w.set(0, idx::X, gain);
        l2.w.set(1, idx::X, -gain);
        DynModel::from_parts(
            Variant::Plain,
            vec![l1, l2],
            NormStats::identity(in_dim, STATE_DIM),
        )
        .unwrap()
    }

    #[test]
    fn geometry_on_path_is_zero() {
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let (g, arc) = path_geometry(&state_at(2.0, 0.0, 0.0), &w, 2.0);
        assert_eq!(g.p, 0.0);
        assert_eq!(g.h, 0.0);
        assert_eq!(g.f, 0.0);
        assert!((arc - 2.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_forward_progress() {
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let arc0 = closest_segment((2.0, 0.0), &w).arc;
        let (g, _) = path_geometry(&state_at(3.0, 0.0, 0.0), &w, arc0);
        assert!((g.f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_opposite_heading() {
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let (g, _) = path_geometry(&state_at(2.0, 0.0, PI), &w, 0.0);
        assert!((g.h - PI).abs() < 1e-12);
    }

    #[test]
    fn step_cost_example_values() {
        let c = cfg();
        let g = PathGeometry {
            p: 1.0,
            h: 0.5,
            f: 2.0,
        };
        // 50*1 + 5*0.5 - 10*2 = 32.5 with the default weights.
        assert!((step_cost(&g, &c.mpc) - 32.5).abs() < 1e-12);
        let zero = PathGeometry {
            p: 0.0,
            h: 0.0,
            f: 0.0,
        };
        assert_eq!(step_cost(&zero, &c.mpc), 0.0);
        let doubled = PathGeometry { p: 2.0, ..g };
        assert!((step_cost(&doubled, &c.mpc) - step_cost(&g, &c.mpc) - c.mpc.f_p).abs() < 1e-12);
    }

    #[test]
    fn sampling_respects_bounds_and_seed() {
        let c = cfg();
        let seqs = sample_sequences(99, &c.mpc, ActionKind::VelocitySetpoint, &c.sim);
        assert_eq!(seqs.len(), c.mpc.candidates);
        let (lo, hi) = sampling_box(&c.mpc, ActionKind::VelocitySetpoint, &c.sim);
        for seq in &seqs {
            assert_eq!(seq.len(), c.mpc.horizon);
            for a in seq {
                assert!(a.left >= lo && a.left <= hi);
                assert!(a.right >= lo && a.right <= hi);
            }
        }
        let again = sample_sequences(99, &c.mpc, ActionKind::VelocitySetpoint, &c.sim);
        assert_eq!(seqs, again);

        let mut tiny = c.mpc.clone();
        tiny.candidates = 1;
        tiny.horizon = 1;
        let one = sample_sequences(5, &tiny, ActionKind::VelocitySetpoint, &c.sim);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 1);
    }

    #[test]
    fn zero_delta_model_cost_is_static_geometry() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let model = zero_model();
        let s0 = state_at(1.0, 0.5, 0.2);
        let seq: Vec<Action> = (0..4)
            .map(|_| Action::new(3.0, 3.0, ActionKind::VelocitySetpoint))
            .collect();
        let (cost, predicted) = evaluate_sequence(&model, &s0, &seq, None, &w, &c.mpc).unwrap();
        let (g, _) = path_geometry(&s0, &w, closest_segment(s0.pos(), &w).arc);
        // Static geometry with f = 0, repeated over the horizon.
        assert!((cost - 4.0 * (c.mpc.f_p * g.p + c.mpc.f_h * g.h)).abs() < 1e-9);
        for p in predicted {
            assert!((p.0[idx::X] - s0.0[idx::X]).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_one_reduces_to_single_step() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let model = toy_forward_model(0.05);
        let s0 = state_at(1.0, 0.0, 0.0);
        let seq = [Action::new(1.0, 1.0, ActionKind::DirectPwm)];
        let (cost, predicted) = evaluate_sequence(&model, &s0, &seq, None, &w, &c.mpc).unwrap();
        assert_eq!(predicted.len(), 1);
        let arc0 = closest_segment(s0.pos(), &w).arc;
        let (g, _) = path_geometry(&predicted[0], &w, arc0);
        assert!((cost - step_cost(&g, &c.mpc)).abs() < 1e-12);
    }

    #[test]
    fn toy_model_brute_force_prefers_max_forward() {
        // Enumerate all symmetric pwm sequences in {-1, 0, 1}^H on a
        // straight +x path; full throttle must be the argmin.
        let mut c = cfg().mpc;
        c.horizon = 4;
        let w = make_path(PathKind::Straight, 10.0).unwrap();
        let model = toy_forward_model(0.05);
        let s0 = state_at(0.0, 0.0, 0.0);
        let levels = [-1.0, 0.0, 1.0];
        let mut seqs = Vec::new();
        for a in levels {
            for b in levels {
                for d in levels {
                    for e in levels {
                        seqs.push(vec![
                            Action::new(a, a, ActionKind::DirectPwm),
                            Action::new(b, b, ActionKind::DirectPwm),
                            Action::new(d, d, ActionKind::DirectPwm),
                            Action::new(e, e, ActionKind::DirectPwm),
                        ]);
                    }
                }
            }
        }
        let costs = evaluate_candidates(&model, &s0, &seqs, None, &w, &c).unwrap();
        let best = select_best(&costs).unwrap();
        for a in &seqs[best] {
            assert_eq!(a.left, 1.0);
            assert_eq!(a.right, 1.0);
        }
        // And the brute-force minimum matches.
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(costs[best], min);
    }

    #[test]
    fn batched_matches_sequential_bitwise() {
        let c = cfg();
        let w = make_path(PathKind::Left, 2.0).unwrap();
        let model = toy_forward_model(0.03);
        let s0 = state_at(0.3, -0.2, 0.4);
        let mut mpc_cfg = c.mpc.clone();
        mpc_cfg.candidates = 40;
        let seqs = sample_sequences(7, &mpc_cfg, ActionKind::DirectPwm, &c.sim);
        let batched = evaluate_candidates(&model, &s0, &seqs, None, &w, &mpc_cfg).unwrap();
        for (i, seq) in seqs.iter().enumerate() {
            let (cost, _) = evaluate_sequence(&model, &s0, seq, None, &w, &mpc_cfg).unwrap();
            assert_eq!(cost.to_bits(), batched[i].to_bits(), "candidate {i}");
        }
    }

    #[test]
    fn tie_break_picks_earliest() {
        assert_eq!(select_best(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(select_best(&[f64::INFINITY, f64::INFINITY]), None);
        assert_eq!(select_best(&[f64::INFINITY, 5.0]), Some(1));
    }

    #[test]
    fn weight_scaling_keeps_argmin() {
        let c = cfg();
        let w = make_path(PathKind::Zigzag, 1.0).unwrap();
        let model = toy_forward_model(0.05);
        let s0 = state_at(0.1, 0.2, 0.1);
        let mut base = c.mpc.clone();
        base.candidates = 25;
        let seqs = sample_sequences(3, &base, ActionKind::DirectPwm, &c.sim);
        let costs = evaluate_candidates(&model, &s0, &seqs, None, &w, &base).unwrap();
        let pick = select_best(&costs).unwrap();
        for scale in [0.1, 2.0, 1000.0] {
            let mut scaled = base.clone();
            scaled.f_p *= scale;
            scaled.f_f *= scale;
            scaled.f_h *= scale;
            let costs2 = evaluate_candidates(&model, &s0, &seqs, None, &w, &scaled).unwrap();
            assert_eq!(select_best(&costs2).unwrap(), pick, "scale {scale}");
        }
    }

    #[test]
    fn k_equals_one_returns_that_action() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let model = zero_model();
        let mut mpc_cfg = c.mpc.clone();
        mpc_cfg.candidates = 1;
        let s0 = state_at(0.0, 0.0, 0.0);
        let (a, diag) = mpc_step(
            &model,
            &s0,
            None,
            &w,
            &mpc_cfg,
            ActionKind::VelocitySetpoint,
            &c.sim,
            123,
        )
        .unwrap();
        let seqs = sample_sequences(123, &mpc_cfg, ActionKind::VelocitySetpoint, &c.sim);
        assert_eq!(a, seqs[0][0]);
        assert_eq!(diag.chosen, 0);
    }

    #[test]
    fn exploding_model_disqualifies_all() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let in_dim = STATE_DIM + 2;
        let mut l1 = Layer::zeros(in_dim, 2, Activation::Relu);
        l1.w.set(0, 0, f64::MAX);
        l1.w.set(0, 1, f64::MAX);
        let mut l2 = Layer::zeros(2, STATE_DIM, Activation::Linear);
        l2.w.set(0, 0, f64::MAX);
        let model = DynModel::from_parts(
            Variant::Plain,
            vec![l1, l2],
            NormStats::identity(in_dim, STATE_DIM),
        )
        .unwrap();
        let s0 = state_at(1.0, 0.0, 0.0);
        let err = mpc_step(
            &model,
            &s0,
            None,
            &w,
            &c.mpc,
            ActionKind::VelocitySetpoint,
            &c.sim,
            5,
        );
        assert!(matches!(err, Err(Error::Planning(_))));
    }

    #[test]
    fn rollout_zero_duration_and_determinism() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let model = zero_model();
        let start = WorldState::initial(&c.sim);
        let mut mpc_cfg = c.mpc.clone();
        mpc_cfg.candidates = 20;
        let empty = mpc_rollout(
            &c.sim,
            &c.terrains[0],
            &model,
            &w,
            &mpc_cfg,
            &c.features,
            &EmbeddingProvider::None,
            &start,
            0.0,
            1,
        )
        .unwrap();
        assert!(empty.states.is_empty());
        assert_eq!(empty.cost, 0.0);

        let a = mpc_rollout(
            &c.sim,
            &c.terrains[0],
            &model,
            &w,
            &mpc_cfg,
            &c.features,
            &EmbeddingProvider::None,
            &start,
            1.0,
            17,
        )
        .unwrap();
        let b = mpc_rollout(
            &c.sim,
            &c.terrains[0],
            &model,
            &w,
            &mpc_cfg,
            &c.features,
            &EmbeddingProvider::None,
            &start,
            1.0,
            17,
        )
        .unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.0.map(f64::to_bits), y.0.map(f64::to_bits));
        }
    }

    #[test]
    fn planning_does_not_mutate_inputs() {
        let c = cfg();
        let w = make_path(PathKind::Straight, 2.0).unwrap();
        let model = toy_forward_model(0.05);
        let s0 = state_at(0.2, 0.1, 0.05);
        let before_params = model.flatten_params();
        let s0_copy = s0.clone();
        let _ = mpc_step(
            &model,
            &s0,
            None,
            &w,
            &c.mpc,
            ActionKind::DirectPwm,
            &c.sim,
            11,
        )
        .unwrap();
        assert_eq!(model.flatten_params(), before_params);
        assert_eq!(s0, s0_copy);
    }
}
