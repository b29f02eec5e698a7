//! Planar leg kinematics and the quasi-static pose solver.

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainProfile;

use super::config::CrawlerConfig;

/// Planar base pose: position of the base center and nose-up pitch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
}

impl Pose {
    /// Maps a base-frame (x, z) point into the world.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.pitch.sin_cos();
        [self.x + c * p[0] - s * p[1], self.z + s * p[0] + c * p[1]]
    }

    /// Maps a world-frame vector into the base frame.
    pub fn vector_to_base(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.pitch.sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    /// Unit gravity expressed in the base frame.
    pub fn projected_gravity(&self) -> [f64; 3] {
        let (s, c) = self.pitch.sin_cos();
        [-s, 0.0, -c]
    }
}

/// Knee position relative to the hip, base frame.
pub fn knee_offset(cfg: &CrawlerConfig, hip: f64, _knee: f64) -> [f64; 2] {
    [cfg.thigh_len * hip.sin(), -cfg.thigh_len * hip.cos()]
}

/// Foot position relative to the hip, base frame.
pub fn foot_offset(cfg: &CrawlerConfig, hip: f64, knee: f64) -> [f64; 2] {
    let (l1, l2) = (cfg.thigh_len, cfg.shank_len);
    [l1 * hip.sin() + l2 * (hip + knee).sin(), -(l1 * hip.cos() + l2 * (hip + knee).cos())]
}

pub fn leg_drop(cfg: &CrawlerConfig, hip: f64, knee: f64) -> f64 {
    -foot_offset(cfg, hip, knee)[1]
}

/// Mean leg lean relative to the default posture; zero when feet sit under the hips.
pub fn leg_lean(cfg: &CrawlerConfig, q: &[f64]) -> f64 {
    let neutral = cfg.default_hip + 0.5 * cfg.default_knee;
    let legs = q.len() / 2;
    q.chunks_exact(2).map(|j| j[0] + 0.5 * j[1] - neutral).sum::<f64>() / legs as f64
}

/// Knee angle that gives the requested vertical drop at a fixed hip angle,
/// on the folded-back branch, clamped to the knee limits.
pub fn knee_for_drop(cfg: &CrawlerConfig, hip: f64, drop: f64) -> f64 {
    let (l1, l2) = (cfg.thigh_len, cfg.shank_len);
    let cos_sum = ((drop - l1 * hip.cos()) / l2).clamp(-1.0, 1.0);
    let knee = -cos_sum.acos() - hip;
    knee.clamp(cfg.knee_limits.0, cfg.knee_limits.1)
}

/// Base-frame foot positions for the front and rear leg, with the drop
/// clamped to the solver minimum.
pub fn feet_in_base(cfg: &CrawlerConfig, q: &[f64]) -> [[f64; 2]; 2] {
    let hips = cfg.hip_positions();
    let mut feet = [[0.0; 2]; 2];
    for (leg, hip) in hips.iter().enumerate() {
        let off = foot_offset(cfg, q[2 * leg], q[2 * leg + 1]);
        feet[leg] = [hip[0] + off[0], hip[1] + off[1].min(-cfg.min_leg_drop)];
    }
    feet
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSolution {
    pub pose: Pose,
    /// Feet could not both reach the ground.
    pub fault: bool,
    pub iterations: usize,
}

pub const POSE_MAX_ITERS: usize = 10;
pub const POSE_TOLERANCE: f64 = 1e-6;

/// Finds base height and pitch such that both feet touch the ground.
///
/// Foot world x depends on pitch, so the two-contact constraint is solved by
/// fixed-point iteration on the foot footprints.
pub fn solve_pose(cfg: &CrawlerConfig, q: &[f64], profile: &TerrainProfile, base_x: f64, pitch_guess: f64) -> PoseSolution {
    let [front, rear] = feet_in_base(cfg, q);
    let d = [front[0] - rear[0], front[1] - rear[1]];
    let reach = d[0].hypot(d[1]);
    let phi = d[1].atan2(d[0]);
    let mut pitch = pitch_guess;
    let mut fault = false;
    let mut z = 0.0;
    let mut iterations = 0;
    let mut footprint = [f64::NAN; 2];
    while iterations < POSE_MAX_ITERS {
        iterations += 1;
        let (s, c) = pitch.sin_cos();
        let xf = base_x + c * front[0] - s * front[1];
        let xr = base_x + c * rear[0] - s * rear[1];
        let (gf, gr) = (profile.ground_height(xf), profile.ground_height(xr));
        let mut ratio = (gf - gr) / reach;
        if ratio.abs() > 1.0 || !ratio.is_finite() {
            fault = true;
            ratio = if ratio.is_finite() { ratio.clamp(-1.0, 1.0) } else { 0.0 };
        }
        pitch = ratio.asin() - phi;
        let (s, c) = pitch.sin_cos();
        z = gf - (s * front[0] + c * front[1]);
        let converged = (xf - footprint[0]).abs() < POSE_TOLERANCE && (xr - footprint[1]).abs() < POSE_TOLERANCE;
        footprint = [xf, xr];
        if converged {
            break;
        }
    }
    PoseSolution { pose: Pose { x: base_x, z, pitch }, fault, iterations }
}
