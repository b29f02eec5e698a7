//! Penetration queries of body boxes and leg segments against the terrain.

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainProfile;

use super::config::{CrawlerConfig, Rect};
use super::kinematics::{foot_offset, knee_offset, Pose};

/// Penetrations below this depth count as touching, not colliding.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BodyPart {
    Head,
    Base,
    Hip(usize),
}

/// Body parts in collision-vector order: head, base, hips.
pub fn body_parts(cfg: &CrawlerConfig) -> Vec<(BodyPart, Rect)> {
    let mut parts = vec![(BodyPart::Head, cfg.head_box), (BodyPart::Base, cfg.base_box)];
    parts.extend(cfg.hip_boxes.iter().enumerate().map(|(i, r)| (BodyPart::Hip(i), *r)));
    parts
}

/// Depth of a box inside the ceiling slab, split by how it would leave.
///
/// Each sampled point inside the slab is attributed to the shallower exit:
/// sideways through the nearest vertical face, or straight down. Overlap up
/// to `chamfer` deep near a face slides down the rounded edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlabPenetration {
    pub horizontal: f64,
    pub vertical_front: f64,
    pub vertical_rear: f64,
}

impl SlabPenetration {
    pub fn vertical(&self) -> f64 {
        self.vertical_front.max(self.vertical_rear)
    }
}

pub fn slab_penetration(profile: &TerrainProfile, pose: &Pose, rect: &Rect, chamfer: f64) -> SlabPenetration {
    let mut out = SlabPenetration::default();
    let Some((start, end)) = profile.ceiling_span() else {
        return out;
    };
    for p in rect.sample_points() {
        let [x, z] = pose.to_world(p);
        let Some(c) = profile.ceiling_height(x) else {
            continue;
        };
        let vertical = z - c;
        if vertical <= 0.0 {
            continue;
        }
        let horizontal = (x - start).min(end - x);
        if horizontal < vertical - chamfer {
            out.horizontal = out.horizontal.max(horizontal);
        } else if p[0] >= 0.0 {
            out.vertical_front = out.vertical_front.max(vertical);
        } else {
            out.vertical_rear = out.vertical_rear.max(vertical);
        }
    }
    out
}

/// Deepest sampled point of a box below the ground.
pub fn ground_penetration(profile: &TerrainProfile, pose: &Pose, rect: &Rect) -> f64 {
    rect.sample_points()
        .into_iter()
        .map(|p| {
            let [x, z] = pose.to_world(p);
            profile.ground_height(x) - z
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LegContacts {
    pub foot: bool,
    pub thigh: bool,
    pub shank: bool,
}

/// Thigh and shank ground contact for one leg.
pub fn leg_ground_contacts(
    cfg: &CrawlerConfig,
    profile: &TerrainProfile,
    pose: &Pose,
    leg: usize,
    hip: f64,
    knee: f64,
) -> (bool, bool) {
    let h = cfg.hip_positions()[leg];
    let k = knee_offset(cfg, hip, knee);
    let f = foot_offset(cfg, hip, knee);
    let below = |p: [f64; 2]| {
        let [x, z] = pose.to_world(p);
        profile.ground_height(x) - z > 1e-6
    };
    let along = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let knee_pt = [h[0] + k[0], h[1] + k[1]];
    let foot_pt = [h[0] + f[0], h[1] + f[1]];
    let thigh = [0.25, 0.5, 0.75, 1.0].into_iter().any(|t| below(along(h, knee_pt, t)));
    // the foot end of the shank rests on the ground by construction
    let shank = [0.25, 0.5, 0.75].into_iter().any(|t| below(along(knee_pt, foot_pt, t)));
    (thigh, shank)
}

/// Vertical support forces on the front and rear foot from a static
/// two-support beam carrying the weight at the base center.
pub fn static_foot_loads(weight: f64, base_x: f64, front_x: f64, rear_x: f64) -> [f64; 2] {
    let span = front_x - rear_x;
    if span.abs() < 1e-9 {
        return [0.5 * weight, 0.5 * weight];
    }
    let front = (weight * (base_x - rear_x) / span).clamp(0.0, weight);
    [front, weight - front]
}

/// Per-part binary collision indicators and synthetic contact forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub head: bool,
    pub base: bool,
    pub hips: Vec<bool>,
    pub legs: Vec<LegContacts>,
    /// World-frame contact force on each body part, N.
    pub head_force: [f64; 3],
    pub base_force: [f64; 3],
    pub hip_forces: Vec<[f64; 3]>,
    /// World-frame ground reaction at each foot, N.
    pub foot_forces: Vec<[f64; 3]>,
}

impl CollisionState {
    pub fn empty(n_hips: usize, n_legs: usize) -> Self {
        CollisionState {
            head: false,
            base: false,
            hips: vec![false; n_hips],
            legs: vec![LegContacts::default(); n_legs],
            head_force: [0.0; 3],
            base_force: [0.0; 3],
            hip_forces: vec![[0.0; 3]; n_hips],
            foot_forces: vec![[0.0; 3]; n_legs],
        }
    }

    /// Head, base and hip indicators as 0/1 values.
    pub fn body_vector(&self) -> Vec<f64> {
        let mut v = vec![f64::from(u8::from(self.head)), f64::from(u8::from(self.base))];
        v.extend(self.hips.iter().map(|&h| f64::from(u8::from(h))));
        v
    }

    pub fn any_body(&self) -> bool {
        self.head || self.base || self.hips.iter().any(|&h| h)
    }

    pub fn set_part(&mut self, part: BodyPart, state: bool, force: [f64; 3]) {
        match part {
            BodyPart::Head => {
                self.head = state;
                self.head_force = force;
            }
            BodyPart::Base => {
                self.base = state;
                self.base_force = force;
            }
            BodyPart::Hip(i) => {
                self.hips[i] = state;
                self.hip_forces[i] = force;
            }
        }
    }

    pub fn foot_forces_flat(&self) -> Vec<f64> {
        self.foot_forces.iter().flatten().copied().collect()
    }
}

pub fn horizontal_norm(f: &[f64; 3]) -> f64 {
    f[0].hypot(f[1])
}
