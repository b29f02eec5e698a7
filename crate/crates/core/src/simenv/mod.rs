//! Quasi-static planar crawler environment.

pub mod config;
pub mod contact;
pub mod env;
pub mod kinematics;
pub mod observation;
pub mod stuck;

use thiserror::Error;

use crate::terrain::TerrainError;

pub use config::{CrawlerConfig, ObsDims, Profile, HISTORY_LEN};
pub use contact::{BodyPart, CollisionState};
pub use env::{sample_command, CrawlerEnv, EnvState, EpisodeSetup, Observation, StepInfo, StepOutcome, StepRecord};
pub use kinematics::Pose;
pub use observation::{ActorObservation, PrivilegedState, ProprioFrame};
pub use stuck::StuckTracker;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("step called after the episode ended; call reset first")]
    EpisodeOver,
    #[error("action has {got} entries, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("profile `{0}` only exposes dimensions and cannot be simulated")]
    UnsupportedProfile(&'static str),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}
