//! Random-action data collection, trajectory slicing into training pairs,
//! rollout-level splits, and dataset persistence.
//!
//! Observations and actions are recorded at f32 precision (the precision
//! of the dataset file), and targets are the f32 state differences, so a
//! dataset round-trips its file bitwise.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{embed, Embedding, FeatureConfig, ProjectionMatrix};
use crate::linalg::Matrix;
use crate::rng::stream;
use crate::simworld::{
    observe, quantize_record, render_patch, step, Action, SimParams, StateVector, TerrainParams,
    WorldState, STATE_DIM,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    /// Rollouts per collection run.
    pub rollouts: usize,
    /// Transitions per rollout.
    pub steps: usize,
    /// Start poses are drawn uniformly from this square half-extent (m).
    pub arena_half_extent: f64,
}

/// One recorded episode: `steps + 1` observations, `steps` actions, and a
/// single start-of-rollout terrain embedding.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub id: u64,
    pub terrain: String,
    pub states: Vec<StateVector>,
    pub actions: Vec<Action>,
    pub embedding: Embedding,
    pub seed: u64,
}

/// Minutes of robot time a collection run represents.
pub fn data_minutes(n_rollouts: usize, steps: usize, dt: f64) -> f64 {
    n_rollouts as f64 * steps as f64 * dt / 60.0
}

/// Collect `n_rollouts` random-action rollouts on one terrain. Rollout
/// `r` draws everything from the stream `(base_seed, r)`: start pose,
/// actions, and simulator noise. Deterministic and order-independent.
#[allow(clippy::too_many_arguments)]
pub fn collect(
    sim: &SimParams,
    terrain: &TerrainParams,
    proj: &ProjectionMatrix,
    feat: &FeatureConfig,
    ccfg: &CollectConfig,
    action_box: (f64, f64),
    dt: f64,
    n_rollouts: usize,
    steps: usize,
    base_seed: u64,
) -> Result<Vec<Rollout>> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("need at least one rollout".into()));
    }
    let kind = sim.abstraction;
    (0..n_rollouts)
        .into_par_iter()
        .map(|r| {
            let fail = |e: Error| Error::Rollout {
                id: r as u64,
                reason: e.to_string(),
            };
            let mut rng = stream(base_seed, r as u64);
            let mut ws = WorldState::initial(sim);
            let half = ccfg.arena_half_extent;
            ws.x = rng.gen_range(-half..=half);
            ws.y = rng.gen_range(-half..=half);
            ws.yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            ws.leg_phase_l = rng.gen_range(0.0..std::f64::consts::TAU);
            ws.leg_phase_r = rng.gen_range(0.0..std::f64::consts::TAU);
            ws.unit_gain = rng.gen_range(sim.unit_gain_min..=1.0);

            let patch = render_patch(terrain, &ws, feat.patch_size).map_err(fail)?;
            let embedding = embed(&patch, proj).map_err(fail)?;

            let mut states = Vec::with_capacity(steps + 1);
            let mut actions = Vec::with_capacity(steps);
            states.push(observe(&ws, sim).map_err(fail)?.quantize_recorded());
            let (lo, hi) = action_box;
            for _ in 0..steps {
                // Snap the command to the recording grid so the executed
                // action is exactly the recorded one.
                let left = quantize_record(rng.gen_range(lo..=hi));
                let right = quantize_record(rng.gen_range(lo..=hi));
                let a = Action::new(left, right, kind);
                ws = step(&ws, &a, terrain, sim, dt, &mut rng).map_err(fail)?;
                actions.push(a);
                states.push(observe(&ws, sim).map_err(fail)?.quantize_recorded());
            }
            Ok(Rollout {
                id: r as u64,
                terrain: terrain.name.clone(),
                states,
                actions,
                embedding,
                seed: base_seed,
            })
        })
        .collect()
}

/// Per-rollout metadata carried by a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutMeta {
    pub id: u64,
    pub terrain: String,
    pub seed: u64,
    pub pair_count: usize,
    #[serde(skip)]
    pub embedding: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub terrains: Vec<String>,
    pub base_seeds: Vec<u64>,
    pub config_hash: String,
    pub abstraction: String,
}

impl Provenance {
    pub fn empty() -> Self {
        Self {
            terrains: Vec::new(),
            base_seeds: Vec::new(),
            config_hash: String::new(),
            abstraction: String::new(),
        }
    }
}

/// Normalized training pairs plus rollout bookkeeping. Pairs are stored
/// grouped by rollout, in rollout order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub target_dim: usize,
    pub embed_dim: usize,
    /// `n_pairs x input_dim`, row-major `[s; a]`.
    pub inputs: Vec<f32>,
    /// `n_pairs x target_dim`, row-major `s_next - s`.
    pub targets: Vec<f32>,
    /// Rollout index of each pair.
    pub pair_rollout: Vec<u32>,
    pub rollouts: Vec<RolloutMeta>,
    pub provenance: Provenance,
}

pub const INPUT_DIM: usize = STATE_DIM + 2;

/// Slice rollouts into `(input, target-delta)` pairs; the rollout's
/// embedding is referenced by every pair it produced.
pub fn slice(rollouts: &[Rollout], provenance: Provenance) -> Result<Dataset> {
    let embed_dim = rollouts.first().map(|r| r.embedding.dim()).unwrap_or(0);
    let mut ds = Dataset {
        input_dim: INPUT_DIM,
        target_dim: STATE_DIM,
        embed_dim,
        inputs: Vec::new(),
        targets: Vec::new(),
        pair_rollout: Vec::new(),
        rollouts: Vec::new(),
        provenance,
    };
    for (ri, r) in rollouts.iter().enumerate() {
        if r.states.len() != r.actions.len() + 1 {
            return Err(Error::Rollout {
                id: r.id,
                reason: format!(
                    "{} states vs {} actions",
                    r.states.len(),
                    r.actions.len()
                ),
            });
        }
        if r.embedding.dim() != embed_dim {
            return Err(Error::DimMismatch {
                context: format!("embedding of rollout {}", r.id),
                expected: embed_dim,
                got: r.embedding.dim(),
            });
        }
        for t in 0..r.actions.len() {
            let s = &r.states[t].0;
            let sn = &r.states[t + 1].0;
            for v in s {
                ds.inputs.push(*v as f32);
            }
            ds.inputs.push(r.actions[t].left as f32);
            ds.inputs.push(r.actions[t].right as f32);
            for (a, b) in sn.iter().zip(s) {
                // Grid-valued states: the f64 difference is exact and
                // fits f32 exactly.
                ds.targets.push((a - b) as f32);
            }
            ds.pair_rollout.push(ri as u32);
        }
        ds.rollouts.push(RolloutMeta {
            id: r.id,
            terrain: r.terrain.clone(),
            seed: r.seed,
            pair_count: r.actions.len(),
            embedding: r.embedding.values.iter().map(|v| *v as f32).collect(),
        });
    }
    Ok(ds)
}

impl Dataset {
    pub fn n_pairs(&self) -> usize {
        self.pair_rollout.len()
    }

    /// Dense f64 training matrices. With `with_embedding`, each input row
    /// is extended by its rollout's embedding.
    pub fn to_matrices(&self, with_embedding: bool) -> (Matrix, Matrix) {
        let n = self.n_pairs();
        let in_w = self.input_dim + if with_embedding { self.embed_dim } else { 0 };
        let mut inputs = Matrix::zeros(n, in_w);
        let mut targets = Matrix::zeros(n, self.target_dim);
        for p in 0..n {
            let row = inputs.row_mut(p);
            for (j, v) in self.inputs[p * self.input_dim..(p + 1) * self.input_dim]
                .iter()
                .enumerate()
            {
                row[j] = *v as f64;
            }
            if with_embedding {
                let emb = &self.rollouts[self.pair_rollout[p] as usize].embedding;
                for (j, v) in emb.iter().enumerate() {
                    row[self.input_dim + j] = *v as f64;
                }
            }
            let trow = targets.row_mut(p);
            for (j, v) in self.targets[p * self.target_dim..(p + 1) * self.target_dim]
                .iter()
                .enumerate()
            {
                trow[j] = *v as f64;
            }
        }
        (inputs, targets)
    }

    /// Swap every rollout's embedding for the one-hot label of its
    /// terrain, in the given terrain order.
    pub fn replace_embeddings_with_onehot(&mut self, terrain_order: &[String]) -> Result<()> {
        for meta in &mut self.rollouts {
            let idx = terrain_order
                .iter()
                .position(|t| *t == meta.terrain)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "terrain '{}' not in configured presets",
                        meta.terrain
                    ))
                })?;
            let mut onehot = vec![0.0f32; terrain_order.len()];
            onehot[idx] = 1.0;
            meta.embedding = onehot;
        }
        self.embed_dim = terrain_order.len();
        Ok(())
    }

    /// Split by rollout (never by pair). Both sides are non-empty.
    pub fn split(&self, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratio must be in (0, 1), got {ratio}"
            )));
        }
        let n = self.rollouts.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "need at least two rollouts to split".into(),
            ));
        }
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, 0));
        let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
        let mut in_train = vec![false; n];
        for &ri in &order[..n_train] {
            in_train[ri] = true;
        }
        Ok((
            self.filter_rollouts(|ri| in_train[ri]),
            self.filter_rollouts(|ri| !in_train[ri]),
        ))
    }

    fn filter_rollouts(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let mut out = Dataset {
            input_dim: self.input_dim,
            target_dim: self.target_dim,
            embed_dim: self.embed_dim,
            inputs: Vec::new(),
            targets: Vec::new(),
            pair_rollout: Vec::new(),
            rollouts: Vec::new(),
            provenance: self.provenance.clone(),
        };
        let mut new_index = vec![u32::MAX; self.rollouts.len()];
        for (ri, meta) in self.rollouts.iter().enumerate() {
            if keep(ri) {
                new_index[ri] = out.rollouts.len() as u32;
                out.rollouts.push(meta.clone());
            }
        }
        for p in 0..self.n_pairs() {
            let ri = self.pair_rollout[p] as usize;
            if new_index[ri] != u32::MAX {
                out.inputs
                    .extend_from_slice(&self.inputs[p * self.input_dim..(p + 1) * self.input_dim]);
                out.targets.extend_from_slice(
                    &self.targets[p * self.target_dim..(p + 1) * self.target_dim],
                );
                out.pair_rollout.push(new_index[ri]);
            }
        }
        out
    }

    /// Concatenate datasets with matching dimensions.
    pub fn merge(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no datasets to merge".into()))?;
        let mut out = Dataset {
            input_dim: first.input_dim,
            target_dim: first.target_dim,
            embed_dim: first.embed_dim,
            inputs: Vec::new(),
            targets: Vec::new(),
            pair_rollout: Vec::new(),
            rollouts: Vec::new(),
            provenance: Provenance::empty(),
        };
        let mut hashes: Vec<String> = Vec::new();
        for ds in parts {
            if ds.input_dim != out.input_dim
                || ds.target_dim != out.target_dim
                || ds.embed_dim != out.embed_dim
            {
                return Err(Error::DimMismatch {
                    context: "merging datasets".into(),
                    expected: out.input_dim + out.embed_dim,
                    got: ds.input_dim + ds.embed_dim,
                });
            }
            let offset = out.rollouts.len() as u32;
            out.inputs.extend_from_slice(&ds.inputs);
            out.targets.extend_from_slice(&ds.targets);
            out.pair_rollout
                .extend(ds.pair_rollout.iter().map(|r| r + offset));
            out.rollouts.extend(ds.rollouts.iter().cloned());
            for t in &ds.provenance.terrains {
                if !out.provenance.terrains.contains(t) {
                    out.provenance.terrains.push(t.clone());
                }
            }
            out.provenance
                .base_seeds
                .extend_from_slice(&ds.provenance.base_seeds);
            if !hashes.contains(&ds.provenance.config_hash) {
                hashes.push(ds.provenance.config_hash.clone());
            }
            if out.provenance.abstraction.is_empty() {
                out.provenance.abstraction = ds.provenance.abstraction.clone();
            }
        }
        out.provenance.config_hash = hashes.join("+");
        Ok(out)
    }

    /// SHA-256 of the serialized dataset.
    pub fn content_hash(&self) -> String {
        let bytes = encode(self);
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

const DATA_MAGIC: &[u8; 4] = b"RCHD";
const DATA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MetaJson {
    rollouts: Vec<RolloutMeta>,
    provenance: Provenance,
}

fn encode(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATA_MAGIC);
    buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.target_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.embed_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.n_pairs() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.rollouts.len() as u32).to_le_bytes());
    for p in 0..ds.n_pairs() {
        for v in &ds.inputs[p * ds.input_dim..(p + 1) * ds.input_dim] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &ds.targets[p * ds.target_dim..(p + 1) * ds.target_dim] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for meta in &ds.rollouts {
        for v in &meta.embedding {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = MetaJson {
        rollouts: ds.rollouts.clone(),
        provenance: ds.provenance.clone(),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != DATA_MAGIC {
        return Err(Error::Format {
            path: display,
            reason: "missing RCHD magic".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DATA_VERSION {
        return Err(Error::Version {
            path: display,
            found: version,
            expected: DATA_VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Format {
            path: display,
            reason: "file too short".into(),
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Checksum(display));
    }

    let fmt_err = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    };
    let mut off = 8;
    let mut take = |n: usize| -> Result<&[u8]> {
        if off + n > body.len() {
            return Err(fmt_err("unexpected end of file"));
        }
        let s = &body[off..off + n];
        off += n;
        Ok(s)
    };
    let input_dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let target_dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let embed_dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_pairs = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let n_rollouts = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;

    let read_f32s = |raw: &[u8]| -> Vec<f32> {
        raw.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mut inputs = Vec::with_capacity(n_pairs * input_dim);
    let mut targets = Vec::with_capacity(n_pairs * target_dim);
    for _ in 0..n_pairs {
        inputs.extend(read_f32s(take(input_dim * 4)?));
        targets.extend(read_f32s(take(target_dim * 4)?));
    }
    let mut embeddings = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        embeddings.push(read_f32s(take(embed_dim * 4)?));
    }
    let json_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let json = take(json_len)?;
    if off != body.len() {
        return Err(fmt_err("trailing bytes after metadata"));
    }
    let meta: MetaJson = serde_json::from_slice(json)
        .map_err(|e| fmt_err(&format!("bad metadata JSON: {e}")))?;
    if meta.rollouts.len() != n_rollouts {
        return Err(fmt_err("rollout count mismatch"));
    }
    let mut rollouts = meta.rollouts;
    for (meta, emb) in rollouts.iter_mut().zip(embeddings) {
        meta.embedding = emb;
    }
    let total: usize = rollouts.iter().map(|r| r.pair_count).sum();
    if total != n_pairs {
        return Err(fmt_err("pair counts do not sum to the header count"));
    }
    let mut pair_rollout = Vec::with_capacity(n_pairs);
    for (ri, meta) in rollouts.iter().enumerate() {
        pair_rollout.extend(std::iter::repeat(ri as u32).take(meta.pair_count));
    }
    Ok(Dataset {
        input_dim,
        target_dim,
        embed_dim,
        inputs,
        targets,
        pair_rollout,
        rollouts,
        provenance: meta.provenance,
    })
}
