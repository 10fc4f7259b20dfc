//! Terrain-conditioning features: one-hot labels, fixed random projections
//! of image patches, and a file hook for embeddings computed offline.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::simworld::ImagePatch;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Dimension of the projected terrain embedding.
    pub embed_dim: usize,
    /// Side length of the synthetic camera patch (pixels).
    pub patch_size: usize,
    /// Seed of the fixed random projection matrix.
    pub projection_seed: u64,
}

impl FeatureConfig {
    /// Flattened patch dimension the projection consumes.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * ImagePatch::CHANNELS
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    OneHot,
    RandomProjection,
    PrecomputedFile,
}

/// Low-dimensional terrain descriptor fed to the conditioned dynamics
/// model; one per rollout, taken at the rollout start.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Fixed pseudo-random projection; fully determined by `(seed, rows, cols)`
/// and never mutated after creation.
#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    pub seed: u64,
}

impl ProjectionMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Draw a fixed projection with entries i.i.d. `N(0, 1/in_dim)`.
pub fn make_projection(seed: u64, in_dim: usize, out_dim: usize) -> Result<ProjectionMatrix> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::InvalidArgument(
            "projection dimensions must be at least 1".into(),
        ));
    }
    let normal = Normal::new(0.0, (1.0 / in_dim as f64).sqrt())
        .expect("valid normal parameters");
    let mut rng = stream(seed, 0);
    let entries = (0..in_dim * out_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    Ok(ProjectionMatrix {
        rows: out_dim,
        cols: in_dim,
        entries,
        seed,
    })
}

/// Project a flattened patch into the embedding space.
pub fn embed(patch: &ImagePatch, proj: &ProjectionMatrix) -> Result<Embedding> {
    let flat = patch.flat();
    if flat.len() != proj.cols {
        return Err(Error::DimMismatch {
            context: "embed: flattened patch vs projection columns".into(),
            expected: proj.cols,
            got: flat.len(),
        });
    }
    let values = (0..proj.rows)
        .map(|r| {
            let row = &proj.entries[r * proj.cols..(r + 1) * proj.cols];
            crate::linalg::dot(row, flat)
        })
        .collect();
    Ok(Embedding {
        values,
        source: EmbeddingSource::RandomProjection,
    })
}

/// One-hot terrain label of length `n_terrains`.
pub fn one_hot(terrain_index: usize, n_terrains: usize) -> Result<Embedding> {
    if terrain_index >= n_terrains {
        return Err(Error::InvalidArgument(format!(
            "one-hot index {terrain_index} out of range for {n_terrains} terrains"
        )));
    }
    let mut values = vec![0.0; n_terrains];
    values[terrain_index] = 1.0;
    Ok(Embedding {
        values,
        source: EmbeddingSource::OneHot,
    })
}

const EMBED_MAGIC: &[u8; 4] = b"RCHE";
const EMBED_VERSION: u32 = 1;

/// Write per-rollout embeddings: header {magic, version, k, count} then
/// `count * k` little-endian f32 values. Rollout id is the record index.
pub fn save_embeddings(path: &Path, embeddings: &[Embedding]) -> Result<()> {
    let k = embeddings.first().map(|e| e.dim()).unwrap_or(0);
    for (i, e) in embeddings.iter().enumerate() {
        if e.dim() != k {
            return Err(Error::DimMismatch {
                context: format!("embedding {i}"),
                expected: k,
                got: e.dim(),
            });
        }
    }
    let mut buf = Vec::with_capacity(16 + embeddings.len() * k * 4);
    buf.extend_from_slice(EMBED_MAGIC);
    buf.extend_from_slice(&EMBED_VERSION.to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(embeddings.len() as u32).to_le_bytes());
    for e in embeddings {
        for v in &e.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read a per-rollout embedding table written by [`save_embeddings`].
pub fn load_embeddings(path: &Path) -> Result<Vec<Embedding>> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != EMBED_MAGIC {
        return Err(Error::Format {
            path: display,
            reason: "missing RCHE header".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMBED_VERSION {
        return Err(Error::Version {
            path: display,
            found: version,
            expected: EMBED_VERSION,
        });
    }
    let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + count * k * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: display,
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut off = 16;
    for _ in 0..count {
        let mut values = Vec::with_capacity(k);
        for _ in 0..k {
            values.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        out.push(Embedding {
            values,
            source: EmbeddingSource::PrecomputedFile,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::simworld::{render_patch, WorldState};

    #[test]
    fn projection_is_seed_deterministic() {
        let a = make_projection(42, 48, 8).unwrap();
        let b = make_projection(42, 48, 8).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.rows(), 8);
        assert_eq!(a.cols(), 48);
        let c = make_projection(43, 48, 8).unwrap();
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn projection_rejects_zero_dims() {
        assert!(make_projection(1, 0, 4).is_err());
        assert!(make_projection(1, 4, 0).is_err());
    }

    #[test]
    fn projection_entry_mean_near_zero() {
        let n = 100_000;
        let p = make_projection(7, 1000, 100).unwrap();
        let mean = p.entries().iter().sum::<f64>() / n as f64;
        let sigma = (1.0f64 / 1000.0).sqrt();
        let tol = 3.0 * sigma / (n as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean} exceeds 3-sigma bound {tol}");
    }

    #[test]
    fn embed_is_linear() {
        let p = make_projection(3, 4 * 4 * 3, 6).unwrap();
        let zero = ImagePatch {
            width: 4,
            height: 4,
            pixels: vec![0.0; 48],
        };
        let e0 = embed(&zero, &p).unwrap();
        assert!(e0.values.iter().all(|v| *v == 0.0));

        let ones = ImagePatch {
            width: 4,
            height: 4,
            pixels: vec![0.8; 48],
        };
        let half = ImagePatch {
            width: 4,
            height: 4,
            pixels: vec![0.4; 48],
        };
        let e1 = embed(&ones, &p).unwrap();
        let e2 = embed(&half, &p).unwrap();
        for (a, b) in e1.values.iter().zip(&e2.values) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_dim_mismatch() {
        let p = make_projection(3, 100, 6).unwrap();
        let patch = ImagePatch {
            width: 4,
            height: 4,
            pixels: vec![0.0; 48],
        };
        assert!(embed(&patch, &p).is_err());
    }

    #[test]
    fn embeddings_separate_terrain_presets() {
        let cfg = Config::default();
        let proj = make_projection(cfg.features.projection_seed, cfg.features.patch_dim(), cfg.features.embed_dim).unwrap();
        let sample = |t: &crate::simworld::TerrainParams, k: u64| {
            let mut ws = WorldState::initial(&cfg.sim);
            ws.x = (k % 10) as f64 * 0.27 - 1.2;
            ws.y = (k / 10) as f64 * 0.27 - 1.2;
            let p = render_patch(t, &ws, cfg.features.patch_size).unwrap();
            embed(&p, &proj).unwrap().values
        };
        let stats = |ti: usize| {
            let samples: Vec<Vec<f64>> = (0..50).map(|k| sample(&cfg.terrains[ti], k)).collect();
            let dim = samples[0].len();
            let mut centroid = vec![0.0; dim];
            for s in &samples {
                for (c, v) in centroid.iter_mut().zip(s) {
                    *c += v / samples.len() as f64;
                }
            }
            let spread = (samples
                .iter()
                .map(|s| s.iter().zip(&centroid).map(|(v, c)| (v - c).powi(2)).sum::<f64>())
                .sum::<f64>()
                / samples.len() as f64)
                .sqrt();
            (centroid, spread)
        };
        for i in 0..cfg.terrains.len() {
            for j in (i + 1)..cfg.terrains.len() {
                let (ci, si) = stats(i);
                let (cj, sj) = stats(j);
                let d = ci
                    .iter()
                    .zip(&cj)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    d > 3.0 * si.max(sj),
                    "presets {i} and {j} not separable in embedding space"
                );
            }
        }
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(2, 4).unwrap().values, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 1).unwrap().values, vec![1.0]);
        assert!(one_hot(4, 4).is_err());
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.rche");
        let table: Vec<Embedding> = (0..3)
            .map(|i| Embedding {
                values: (0..32).map(|j| (i * 32 + j) as f64 * 0.25).collect(),
                source: EmbeddingSource::RandomProjection,
            })
            .collect();
        save_embeddings(&path, &table).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in loaded.iter().zip(&table) {
            assert_eq!(a.values, b.values); // values chosen f32-exact
            assert_eq!(a.source, EmbeddingSource::PrecomputedFile);
        }
    }

    #[test]
    fn embedding_file_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.rche");
        let mixed = vec![
            Embedding {
                values: vec![1.0; 8],
                source: EmbeddingSource::RandomProjection,
            },
            Embedding {
                values: vec![1.0; 7],
                source: EmbeddingSource::RandomProjection,
            },
        ];
        assert!(save_embeddings(&path, &mixed).is_err());

        let ok = vec![Embedding {
            values: vec![1.0; 8],
            source: EmbeddingSource::RandomProjection,
        }];
        save_embeddings(&path, &ok).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_embeddings(&path).is_err());
    }
}
