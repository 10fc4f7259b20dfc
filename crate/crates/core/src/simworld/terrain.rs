//! Terrain presets and the synthetic camera.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::WorldState;

/// Ground-truth terrain coefficients plus the procedural texture recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainParams {
    pub name: String,
    /// Fraction of nominal forward drive realized on this surface, in (0, 1].
    pub traction_fwd: f64,
    /// Fraction of nominal turn authority realized, in (0, 1].
    pub traction_turn: f64,
    /// Std of per-step yaw slip noise (rad).
    pub slip_sigma: f64,
    /// Coupling of leg speed into roll oscillation and of roll into yaw.
    pub roll_gain: f64,
    /// Roll oscillation frequency (Hz).
    pub roll_freq: f64,
    /// Fractional loss of turn traction at maximum leg speed, in [0, 1).
    pub turn_degrade: f64,
    /// Leg-speed differential (rad/s) at which the turn response falls to
    /// half its linear value; small values model surfaces that break away
    /// under aggressive differentials.
    pub turn_sat: f64,
    pub texture_seed: u64,
    /// Three base colors of the surface texture, RGB in [0, 1].
    pub texture_palette: [[f64; 3]; 3],
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        let ok_fraction = |v: f64| v > 0.0 && v <= 1.0;
        if !ok_fraction(self.traction_fwd) || !ok_fraction(self.traction_turn) {
            return Err(Error::Config(format!(
                "terrain {}: traction values must be in (0, 1]",
                self.name
            )));
        }
        if self.slip_sigma < 0.0 {
            return Err(Error::Config(format!(
                "terrain {}: slip_sigma must be non-negative",
                self.name
            )));
        }
        if !(0.0..1.0).contains(&self.turn_degrade) {
            return Err(Error::Config(format!(
                "terrain {}: turn_degrade must be in [0, 1)",
                self.name
            )));
        }
        if self.roll_freq <= 0.0 {
            return Err(Error::Config(format!(
                "terrain {}: roll_freq must be positive",
                self.name
            )));
        }
        if self.turn_sat <= 0.0 {
            return Err(Error::Config(format!(
                "terrain {}: turn_sat must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

/// RGB image patch, row-major, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePatch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl ImagePatch {
    pub const CHANNELS: usize = 3;

    pub fn flat(&self) -> &[f64] {
        &self.pixels
    }
}

/// Side of the position-quantization cells the texture is anchored to (m).
pub const RENDER_CELL_M: f64 = 0.25;

const SPECKLE: f64 = 0.08;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^ (z >> 33)
}

fn hash_u01(seed: u64, vals: &[u64]) -> f64 {
    let mut state = mix64(seed ^ 0x5bf0_3635_d1fe_b6a1);
    for &v in vals {
        state = mix64(state ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    (state >> 11) as f64 / (1u64 << 53) as f64
}

/// Render the synthetic camera patch the robot sees at its current
/// position. Deterministic in `(texture_seed, quantized position)`:
/// positions inside the same quantization cell yield identical patches.
pub fn render_patch(terrain: &TerrainParams, ws: &WorldState, size: usize) -> Result<ImagePatch> {
    if size < 4 {
        return Err(Error::InvalidArgument(format!(
            "patch size must be at least 4, got {size}"
        )));
    }
    let qx = (ws.x / RENDER_CELL_M).floor() as i64 as u64;
    let qy = (ws.y / RENDER_CELL_M).floor() as i64 as u64;
    let seed = terrain.texture_seed;

    // Per-cell palette mixing weights, gently modulated so neighboring
    // cells look related but not identical.
    let mut weights = [0.45, 0.35, 0.2];
    for (c, w) in weights.iter_mut().enumerate() {
        *w += 0.15 * (hash_u01(seed, &[qx, qy, 100 + c as u64]) - 0.5);
    }
    let total: f64 = weights.iter().sum();
    let w01 = weights[0] / total;
    let w012 = (weights[0] + weights[1]) / total;

    let mut pixels = Vec::with_capacity(size * size * ImagePatch::CHANNELS);
    for row in 0..size {
        for col in 0..size {
            let pick = hash_u01(seed, &[qx, qy, row as u64, col as u64, 1]);
            let color = if pick < w01 {
                terrain.texture_palette[0]
            } else if pick < w012 {
                terrain.texture_palette[1]
            } else {
                terrain.texture_palette[2]
            };
            let speckle =
                SPECKLE * (hash_u01(seed, &[qx, qy, row as u64, col as u64, 2]) - 0.5);
            for ch in color {
                pixels.push((ch + speckle).clamp(0.0, 1.0));
            }
        }
    }
    Ok(ImagePatch {
        width: size,
        height: size,
        pixels,
    })
}
