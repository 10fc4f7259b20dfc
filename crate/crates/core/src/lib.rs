//! Learned dynamics models and sampling-based MPC for a simulated legged
//! millirobot.
//!
//! The pipeline: collect random-action rollouts in a seeded terrain-aware
//! simulator ([`simworld`]), slice them into state-delta training pairs
//! ([`datapipe`]), fit a neural dynamics model with from-scratch
//! backpropagation and Adam ([`dynmodel`]), and drive the robot along
//! waypoint paths with a random-shooting model-predictive controller
//! ([`mpc`]). A differential-drive + PID controller ([`ddrive`]) serves as
//! the hand-engineered baseline. Terrain conditioning comes from fixed
//! random projections of synthetic camera patches ([`features`]).

pub mod cli;
pub mod config;
pub mod datapipe;
pub mod ddrive;
pub mod dynmodel;
pub mod error;
pub mod features;
pub mod geom;
pub mod linalg;
pub mod mpc;
pub mod plot;
pub mod report;
pub mod rng;
pub mod simworld;

pub use config::Config;
pub use error::{Error, Result};
