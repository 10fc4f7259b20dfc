//! Experiment runners: evaluation cells, cost reports, and the
//! collect/train pipelines shared by the CLI and the acceptance suite.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::str::FromStr;

use crate::config::Config;
use crate::datapipe::{collect, slice, Dataset, Provenance};
use crate::ddrive::{closest_segment, dd_rollout, DDParams, PidGains};
use crate::dynmodel::{train, DynModel, TrainOutcome, Variant};
use crate::error::{Error, Result};
use crate::features::{make_projection, ProjectionMatrix};
use crate::mpc::{mpc_rollout, sampling_box, EmbeddingProvider, MpcConfig};
use crate::rng::{derive, stream};
use crate::simworld::{make_path, PathKind, TerrainParams, WorldState};

/// Evaluation protocol settings, from the shared config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Closed-loop run length (s).
    pub duration: f64,
    /// Runs averaged per report cell.
    pub n_seeds: usize,
    /// Path scale handed to the path generators (m).
    pub path_scale: f64,
    /// Start-pose jitter: position (m) and yaw (rad).
    pub start_jitter_pos: f64,
    pub start_jitter_yaw: f64,
    /// Half-width of the MPC action box during speed sweeps (rad/s).
    pub sweep_halfwidth: f64,
}

/// Which controller fills a report cell.
pub enum Controller<'a> {
    DDrive { params: DDParams, pid: PidGains },
    Mpc {
        model: &'a DynModel,
        provider: EmbeddingProvider<'a>,
        mpc: MpcConfig,
    },
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub cost: f64,
    /// Perpendicular distance of the final state from the path (m).
    pub final_perp: f64,
}

#[derive(Clone, Debug)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<RunRecord>,
}

impl CellStats {
    fn from_runs(runs: Vec<RunRecord>) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.cost).sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (runs.iter().map(|r| (r.cost - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, runs }
    }
}

/// Deterministic per-run seed list.
pub fn seeds_for(base: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| derive(base, 0x5eed + i as u64)).collect()
}

/// Evaluation start state: the path origin, heading +x, with a small
/// seeded pose jitter so repeated runs sample run-to-run variation.
pub fn eval_start_state(cfg: &Config, seed: u64) -> WorldState {
    let mut rng = stream(seed, 7);
    let mut ws = WorldState::initial(&cfg.sim);
    let jp = cfg.eval.start_jitter_pos;
    let jy = cfg.eval.start_jitter_yaw;
    ws.x = rng.gen_range(-jp..=jp);
    ws.y = rng.gen_range(-jp..=jp);
    ws.yaw = rng.gen_range(-jy..=jy);
    ws.unit_gain = rng.gen_range(cfg.sim.unit_gain_min..=1.0);
    ws
}

/// Run one controller on one `(terrain, path)` cell over the given seeds.
/// Runs execute in parallel; records keep seed order.
pub fn run_cell(
    cfg: &Config,
    ctrl: &Controller,
    terrain: &TerrainParams,
    path_kind: PathKind,
    seeds: &[u64],
) -> Result<CellStats> {
    let path = make_path(path_kind, cfg.eval.path_scale)?;
    let runs: Result<Vec<RunRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let start = eval_start_state(cfg, seed);
            let run = match ctrl {
                Controller::DDrive { params, pid } => dd_rollout(
                    &cfg.sim,
                    terrain,
                    &path,
                    params,
                    pid,
                    &cfg.mpc,
                    &start,
                    cfg.eval.duration,
                    seed,
                )?,
                Controller::Mpc {
                    model,
                    provider,
                    mpc,
                } => mpc_rollout(
                    &cfg.sim,
                    terrain,
                    model,
                    &path,
                    mpc,
                    &cfg.features,
                    provider,
                    &start,
                    cfg.eval.duration,
                    seed,
                )?,
            };
            let final_perp = run
                .states
                .last()
                .map(|s| closest_segment(s.pos(), &path).p_dist)
                .unwrap_or(0.0);
            Ok(RunRecord {
                seed,
                cost: run.cost,
                final_perp,
            })
        })
        .collect();
    Ok(CellStats::from_runs(runs?))
}

#[derive(Clone, Debug)]
pub struct ReportRow {
    pub controller: String,
    pub terrain: String,
    pub path: String,
    pub stats: CellStats,
}

/// Per-(controller, terrain, path) cost table with provenance.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub n_seeds: usize,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn new(cfg: &Config, n_seeds: usize) -> Self {
        Self {
            config_hash: cfg.hash(),
            n_seeds,
            rows: Vec::new(),
        }
    }

    /// Cell summary CSV. Columns: controller, terrain, path, n_seeds,
    /// mean_cost, std_cost, config_hash.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("controller,terrain,path,n_seeds,mean_cost,std_cost,config_hash\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{}\n",
                r.controller,
                r.terrain,
                r.path,
                r.stats.runs.len(),
                r.stats.mean,
                r.stats.std,
                self.config_hash
            ));
        }
        out
    }

    /// Per-run CSV. Columns: controller, terrain, path, seed, cost,
    /// final_perp.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("controller,terrain,path,seed,cost,final_perp\n");
        for r in &self.rows {
            for run in &r.stats.runs {
                out.push_str(&format!(
                    "{},{},{},{},{:.6},{:.6}\n",
                    r.controller, r.terrain, r.path, run.seed, run.cost, run.final_perp
                ));
            }
        }
        out
    }

    /// SHA-256 over both CSVs; identical for identical (config, seeds).
    pub fn report_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.summary_csv().as_bytes());
        h.update(self.runs_csv().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Model conditioning requested on the command line.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum VariantKind {
    Plain,
    OneHot,
    Conditioned,
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(VariantKind::Plain),
            "onehot" => Ok(VariantKind::OneHot),
            "conditioned" => Ok(VariantKind::Conditioned),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected plain|onehot|conditioned)"
            ))),
        }
    }
}

/// The fixed projection the whole pipeline shares, from the config.
pub fn projection_for(cfg: &Config) -> Result<ProjectionMatrix> {
    make_projection(
        cfg.features.projection_seed,
        cfg.features.patch_dim(),
        cfg.features.embed_dim,
    )
}

/// Collect and slice a random-action dataset on one terrain.
pub fn collect_terrain_dataset(
    cfg: &Config,
    terrain_name: &str,
    n_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<Dataset> {
    let terrain = cfg.terrain(terrain_name)?;
    let proj = projection_for(cfg)?;
    let rollouts = collect(
        &cfg.sim,
        terrain,
        &proj,
        &cfg.features,
        &cfg.collect,
        sampling_box(&cfg.mpc, cfg.sim.abstraction, &cfg.sim),
        cfg.mpc.dt,
        n_rollouts,
        steps,
        seed,
    )?;
    let provenance = Provenance {
        terrains: vec![terrain_name.to_string()],
        base_seeds: vec![seed],
        config_hash: cfg.hash(),
        abstraction: format!("{:?}", cfg.sim.abstraction),
    };
    slice(&rollouts, provenance)
}

/// Merge datasets, apply the conditioning the variant requires, split by
/// rollout, and train with held-out validation.
pub fn train_model(
    cfg: &Config,
    datasets: &[&Dataset],
    kind: VariantKind,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut merged = Dataset::merge(datasets)?;
    let (variant, with_embedding) = match kind {
        VariantKind::Plain => (Variant::Plain, false),
        VariantKind::OneHot => {
            let order: Vec<String> = cfg.terrains.iter().map(|t| t.name.clone()).collect();
            merged.replace_embeddings_with_onehot(&order)?;
            (
                Variant::OneHot {
                    classes: order.len(),
                },
                true,
            )
        }
        VariantKind::Conditioned => {
            if merged.embed_dim != cfg.features.embed_dim {
                return Err(Error::DimMismatch {
                    context: "dataset embeddings vs features.embed_dim".into(),
                    expected: cfg.features.embed_dim,
                    got: merged.embed_dim,
                });
            }
            (
                Variant::Fused {
                    embed_dim: merged.embed_dim,
                },
                true,
            )
        }
    };
    let (train_ds, val_ds) = merged.split(cfg.train.split_ratio, seed)?;
    let (x, t) = train_ds.to_matrices(with_embedding);
    let (vx, vt) = val_ds.to_matrices(with_embedding);
    train(variant, &x, &t, &cfg.train, seed, Some((&vx, &vt)))
}

/// Build the right embedding provider for a model evaluated on a terrain.
pub fn provider_for<'a>(
    cfg: &Config,
    model: &DynModel,
    terrain_name: &str,
    proj: &'a ProjectionMatrix,
) -> Result<EmbeddingProvider<'a>> {
    match model.variant() {
        Variant::Plain => Ok(EmbeddingProvider::None),
        Variant::OneHot { classes } => {
            let index = cfg.terrain_index(terrain_name)?;
            Ok(EmbeddingProvider::OneHot {
                index,
                count: *classes,
            })
        }
        Variant::Fused { .. } => Ok(EmbeddingProvider::Projection(proj)),
    }
}

/// One row of the cost-versus-speed sweep.
#[derive(Clone, Debug)]
pub struct SpeedRow {
    pub speed: f64,
    pub dd: CellStats,
    pub mpc: CellStats,
}

/// Sweep nominal leg speed: the baseline runs at `omega_nom = speed`, the
/// MPC samples actions from a box of the configured half-width centered
/// on the same speed.
pub fn compare_speed(
    cfg: &Config,
    model: &DynModel,
    terrain_name: &str,
    path_kind: PathKind,
    speeds: &[f64],
    base_seed: u64,
) -> Result<Vec<SpeedRow>> {
    if speeds.is_empty() {
        return Err(Error::InvalidArgument("empty speed list".into()));
    }
    let terrain = cfg.terrain(terrain_name)?.clone();
    let proj = projection_for(cfg)?;
    let seeds = seeds_for(base_seed, cfg.eval.n_seeds);
    let mut rows = Vec::with_capacity(speeds.len());
    for &speed in speeds {
        if !(cfg.sim.omega_min..=cfg.sim.omega_max).contains(&speed) {
            return Err(Error::InvalidArgument(format!(
                "speed {speed} outside the leg-speed range [{}, {}]",
                cfg.sim.omega_min, cfg.sim.omega_max
            )));
        }
        let dd = Controller::DDrive {
            params: DDParams {
                omega_nom: speed,
                ..cfg.ddrive.params()
            },
            pid: cfg.ddrive.pid,
        };
        let hw = cfg.eval.sweep_halfwidth;
        let mut mpc_cfg = cfg.mpc.clone();
        mpc_cfg.action_low = (speed - hw).max(cfg.sim.omega_min);
        mpc_cfg.action_high = (speed + hw).min(cfg.sim.omega_max);
        let mpc = Controller::Mpc {
            model,
            provider: provider_for(cfg, model, terrain_name, &proj)?,
            mpc: mpc_cfg,
        };
        rows.push(SpeedRow {
            speed,
            dd: run_cell(cfg, &dd, &terrain, path_kind, &seeds)?,
            mpc: run_cell(cfg, &mpc, &terrain, path_kind, &seeds)?,
        });
    }
    Ok(rows)
}

/// CSV for the speed sweep. Columns: speed, dd_mean, dd_std, mpc_mean,
/// mpc_std, gap (dd minus mpc).
pub fn speed_csv(rows: &[SpeedRow]) -> String {
    let mut out = String::from("speed,dd_mean,dd_std,mpc_mean,mpc_std,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.speed,
            r.dd.mean,
            r.dd.std,
            r.mpc.mean,
            r.mpc.std,
            r.dd.mean - r.mpc.mean
        ));
    }
    out
}
