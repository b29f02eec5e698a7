//! Per-environment terrain difficulty levels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::terrain::{curriculum_interpolate, randomize_spec, sample_kind_from, TerrainKind, TerrainSpec, NUM_LEVELS};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    /// Terrain kinds to draw from by their table proportions; empty means open flat ground.
    pub kinds: Vec<TerrainKind>,
    pub initial_level: u32,
    /// Promote when the leading body edge crossed at least this fraction of the feature.
    pub promote_fraction: f64,
    /// Demote when progress was below this fraction of the commanded distance.
    pub demote_fraction: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig { kinds: TerrainKind::ALL.to_vec(), initial_level: 0, promote_fraction: 0.8, demote_fraction: 0.25 }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.initial_level >= NUM_LEVELS {
            return Err(TrainError::InvalidConfig {
                key: "curriculum.initial_level".into(),
                reason: format!("must be below {NUM_LEVELS}"),
            });
        }
        Ok(())
    }
}

/// How an episode went, as seen by the curriculum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    /// Largest fraction of the featured region crossed.
    pub traversal: f64,
    /// Distance moved along the command direction, m.
    pub progress: f64,
    /// `|v_cmd| · elapsed`, capped by the room available on the tile, m.
    pub commanded_distance: f64,
}

/// Next level after an episode at `level`.
pub fn next_level(cfg: &CurriculumConfig, level: u32, r: &EpisodeResult) -> u32 {
    if r.traversal >= cfg.promote_fraction {
        (level + 1).min(NUM_LEVELS - 1)
    } else if r.progress < cfg.demote_fraction * r.commanded_distance {
        level.saturating_sub(1)
    } else {
        level
    }
}

/// Draws the terrain of the next episode at a given level.
pub fn draw_terrain<R: Rng + ?Sized>(cfg: &CurriculumConfig, level: u32, rng: &mut R) -> Result<Option<TerrainSpec>, TrainError> {
    if cfg.kinds.is_empty() {
        return Ok(None);
    }
    let kind = sample_kind_from(&cfg.kinds, rng);
    let base = curriculum_interpolate(kind, level)?;
    Ok(Some(randomize_spec(&base, rng)))
}
