//! Shared JSON configuration.
//!
//! Every tunable constant in the pipeline lives in one JSON document; the
//! defaults ship in `config/default.json` (embedded at build time) and any
//! experiment can be reproduced from `(config, seed)` alone. Reports embed
//! [`Config::hash`] so artifacts produced under different configs are
//! detectable.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::datapipe::CollectConfig;
use crate::ddrive::DdriveConfig;
use crate::dynmodel::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::mpc::MpcConfig;
use crate::report::EvalConfig;
use crate::simworld::{SimParams, TerrainParams};

const DEFAULT_JSON: &str = include_str!("../config/default.json");
const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub sim: SimParams,
    pub terrains: Vec<TerrainParams>,
    pub ddrive: DdriveConfig,
    pub mpc: MpcConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub collect: CollectConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_JSON).expect("embedded default config must parse")
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from `path` when given, else use the embedded defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.terrains.is_empty() {
            return Err(Error::Config("at least one terrain preset required".into()));
        }
        for t in &self.terrains {
            t.validate()?;
        }
        if self.sim.substeps == 0 {
            return Err(Error::Config("sim.substeps must be at least 1".into()));
        }
        if self.sim.omega_max <= self.sim.omega_min {
            return Err(Error::Config("sim.omega_max must exceed omega_min".into()));
        }
        if self.mpc.candidates == 0 || self.mpc.horizon == 0 {
            return Err(Error::Config("mpc.candidates and mpc.horizon must be >= 1".into()));
        }
        if self.mpc.dt <= 0.0 {
            return Err(Error::Config("mpc.dt must be positive".into()));
        }
        if !(self.train.split_ratio > 0.0 && self.train.split_ratio < 1.0) {
            return Err(Error::Config("train.split_ratio must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Index of a terrain preset by name; the error lists the presets.
    pub fn terrain_index(&self, name: &str) -> Result<usize> {
        self.terrains
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| {
                let names: Vec<&str> = self.terrains.iter().map(|t| t.name.as_str()).collect();
                Error::Config(format!(
                    "unknown terrain '{name}'; available presets: {}",
                    names.join(", ")
                ))
            })
    }

    pub fn terrain(&self, name: &str) -> Result<&TerrainParams> {
        Ok(&self.terrains[self.terrain_index(name)?])
    }

    /// Hex SHA-256 of the canonical serialized config.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.terrains.len(), 4);
        assert_eq!(cfg.mpc.candidates, 500);
        assert_eq!(cfg.mpc.horizon, 4);
        assert!((cfg.mpc.f_p - 50.0).abs() < 1e-12);
        assert!((cfg.mpc.f_f - 10.0).abs() < 1e-12);
        assert!((cfg.mpc.f_h - 5.0).abs() < 1e-12);
        assert_eq!(cfg.train.epochs, 50);
        assert!((cfg.train.learning_rate - 0.001).abs() < 1e-12);
        assert_eq!(cfg.train.batch_size, 1000);
        assert_eq!(cfg.collect.rollouts, 200);
        assert_eq!(cfg.collect.steps, 50);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let b = Config::default();
        assert_eq!(a.hash(), b.hash());
        let mut c = Config::default();
        c.mpc.horizon = 5;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_terrain_lists_presets() {
        let cfg = Config::default();
        let err = cfg.terrain("moon").unwrap_err().to_string();
        assert!(err.contains("carpet"));
        assert!(err.contains("turf"));
    }
}
