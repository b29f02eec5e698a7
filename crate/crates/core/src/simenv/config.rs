use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Crawler,
    /// Dimension bookkeeping for the 12-joint quadruped; cannot be simulated.
    QuadrupedDims,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Crawler => "crawler",
            Profile::QuadrupedDims => "quadruped-dims",
        }
    }
}

fn default_crouch_drop() -> f64 {
    0.05
}

fn default_ceiling_chamfer() -> f64 {
    0.05
}

/// Axis-aligned rectangle in the body (x, z) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Self {
        Rect { x_min, x_max, z_min, z_max }
    }

    /// Corners plus interior points on the top and bottom edges.
    pub fn sample_points(&self) -> [[f64; 2]; 10] {
        let lerp = |t: f64| self.x_min + t * (self.x_max - self.x_min);
        [
            [self.x_min, self.z_max],
            [lerp(0.25), self.z_max],
            [lerp(0.5), self.z_max],
            [lerp(0.75), self.z_max],
            [self.x_max, self.z_max],
            [self.x_max, self.z_min],
            [lerp(0.75), self.z_min],
            [lerp(0.5), self.z_min],
            [lerp(0.25), self.z_min],
            [self.x_min, self.z_min],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRanges {
    pub vx: (f64, f64),
    pub vy: (f64, f64),
    pub wz: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Randomization {
    pub foot_friction: (f64, f64),
    pub gain_scale: (f64, f64),
    pub joint_friction: (f64, f64),
    pub joint_armature: (f64, f64),
    pub time_delay: (f64, f64),
    /// Seconds between push onsets.
    pub push_interval: (f64, f64),
    pub push_max_force: f64,
    pub push_duration: f64,
    /// Velocity perturbation per newton of push force, m/s/N.
    pub push_velocity_gain: f64,
}

impl Default for Randomization {
    fn default() -> Self {
        Randomization {
            foot_friction: (0.4, 1.0),
            gain_scale: (0.8, 1.2),
            joint_friction: (0.0, 0.001),
            joint_armature: (0.0, 0.001),
            time_delay: (0.0, 0.02),
            push_interval: (5.0, 10.0),
            push_max_force: 20.0,
            push_duration: 0.5,
            push_velocity_gain: 0.01,
        }
    }
}

/// Geometry, actuation and episode parameters of the planar crawler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlerConfig {
    pub profile: Profile,
    pub n_joints: usize,
    pub body_half_length: f64,
    /// Hips sit this far below the base center.
    pub hip_height_offset: f64,
    pub thigh_len: f64,
    pub shank_len: f64,
    pub head_box: Rect,
    pub base_box: Rect,
    pub hip_boxes: Vec<Rect>,
    pub default_hip: f64,
    pub default_knee: f64,
    pub hip_limits: (f64, f64),
    pub knee_limits: (f64, f64),
    /// Smallest vertical hip-to-foot drop the pose solver accepts.
    pub min_leg_drop: f64,
    /// Leg drop of the nominal crouched posture; relative tunnel heights are
    /// taken against the height it gives.
    #[serde(default = "default_crouch_drop")]
    pub crouch_drop: f64,
    pub kp: f64,
    pub kd: f64,
    pub contact_stiffness: f64,
    /// Ceiling overlap at a tunnel mouth shallower than this presses the
    /// body down instead of blocking it, m.
    #[serde(default = "default_ceiling_chamfer")]
    pub ceiling_chamfer: f64,
    pub control_dt: f64,
    pub substeps: usize,
    pub mass: f64,
    pub gravity: f64,
    /// First-order joint tracking time constant, s.
    pub tracking_time_constant: f64,
    /// Damping added to the tracking lag per unit of joint friction plus armature.
    pub lag_damping_gain: f64,
    /// Gait speed per radian of mean leg lean, m/s.
    pub gait_gain: f64,
    pub max_gait_speed: f64,
    /// Fraction of gait speed lost at zero foot friction.
    pub traction_loss: f64,
    /// Hip deflection per newton of horizontal body contact force, rad/N.
    pub hip_compliance: f64,
    pub episode_length_s: f64,
    pub max_pitch: f64,
    pub stuck_speed: f64,
    pub stuck_sustain_s: f64,
    pub pcv_extension_s: f64,
    pub spawn_x: f64,
    /// Distance from the tile ends where the tile stops: a wall behind the
    /// commanded direction, a truncation ahead of it.
    pub bounds_margin: f64,
    pub command: CommandRanges,
    pub randomization: Randomization,
}

impl Default for CrawlerConfig {
    fn default() -> Self {
        CrawlerConfig::crawler()
    }
}

impl CrawlerConfig {
    pub fn crawler() -> Self {
        CrawlerConfig {
            profile: Profile::Crawler,
            n_joints: 4,
            body_half_length: 0.2,
            hip_height_offset: 0.05,
            thigh_len: 0.13,
            shank_len: 0.13,
            head_box: Rect::new(0.20, 0.28, -0.04, 0.10),
            base_box: Rect::new(-0.20, 0.20, -0.05, 0.08),
            hip_boxes: vec![Rect::new(0.14, 0.24, -0.09, 0.07), Rect::new(-0.24, -0.14, -0.09, 0.07)],
            default_hip: 0.28,
            default_knee: -0.56,
            hip_limits: (-1.0, 2.2),
            knee_limits: (-2.9, 0.0),
            min_leg_drop: 0.04,
            crouch_drop: default_crouch_drop(),
            kp: 20.0,
            kd: 0.5,
            contact_stiffness: 2000.0,
            ceiling_chamfer: default_ceiling_chamfer(),
            control_dt: 0.02,
            substeps: 4,
            mass: 6.0,
            gravity: 9.81,
            tracking_time_constant: 0.04,
            lag_damping_gain: 100.0,
            gait_gain: 2.0,
            max_gait_speed: 1.5,
            traction_loss: 0.25,
            hip_compliance: 0.003,
            episode_length_s: 20.0,
            max_pitch: 1.2,
            stuck_speed: 0.05,
            stuck_sustain_s: 0.2,
            pcv_extension_s: 0.04,
            spawn_x: 0.3,
            bounds_margin: 0.1,
            command: CommandRanges { vx: (-1.0, 1.0), vy: (0.0, 0.0), wz: (0.0, 0.0) },
            randomization: Randomization::default(),
        }
    }

    pub fn quadruped_dims() -> Self {
        CrawlerConfig {
            profile: Profile::QuadrupedDims,
            n_joints: 12,
            command: CommandRanges { vx: (-1.0, 1.0), vy: (-0.5, 0.5), wz: (-1.0, 1.0) },
            hip_boxes: vec![Rect::new(0.14, 0.24, -0.09, 0.07); 4],
            ..CrawlerConfig::crawler()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Crawler => Self::crawler(),
            Profile::QuadrupedDims => Self::quadruped_dims(),
        }
    }

    pub fn n_legs(&self) -> usize {
        match self.profile {
            Profile::Crawler => self.n_joints / 2,
            Profile::QuadrupedDims => self.n_joints / 3,
        }
    }

    pub fn dims(&self) -> ObsDims {
        ObsDims::new(self.n_joints, self.hip_boxes.len(), self.n_legs())
    }

    pub fn hip_positions(&self) -> [[f64; 2]; 2] {
        let z = -self.hip_height_offset;
        [[self.body_half_length, z], [-self.body_half_length, z]]
    }

    pub fn default_joints(&self) -> Vec<f64> {
        (0..self.n_joints / 2).flat_map(|_| [self.default_hip, self.default_knee]).collect()
    }

    pub fn joint_limits(&self, joint: usize) -> (f64, f64) {
        if joint.is_multiple_of(2) {
            self.hip_limits
        } else {
            self.knee_limits
        }
    }

    pub fn episode_steps(&self) -> u32 {
        (self.episode_length_s / self.control_dt).round() as u32
    }

    pub fn ticks(&self, seconds: f64) -> u32 {
        (seconds / self.control_dt).round() as u32
    }

    /// Front-most and rear-most body x in the base frame.
    pub fn body_extent(&self) -> (f64, f64) {
        let boxes = std::iter::once(&self.head_box).chain(std::iter::once(&self.base_box)).chain(&self.hip_boxes);
        boxes.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.x_min), hi.max(r.x_max)))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("thigh_len", self.thigh_len),
            ("shank_len", self.shank_len),
            ("control_dt", self.control_dt),
            ("contact_stiffness", self.contact_stiffness),
            ("tracking_time_constant", self.tracking_time_constant),
            ("mass", self.mass),
            ("episode_length_s", self.episode_length_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.ceiling_chamfer >= 0.0) {
            return Err(SimError::InvalidConfig("ceiling_chamfer must be non-negative".into()));
        }
        if self.substeps == 0 {
            return Err(SimError::InvalidConfig("substeps must be at least 1".into()));
        }
        if self.n_joints == 0 || !self.n_joints.is_multiple_of(2) {
            return Err(SimError::InvalidConfig(format!("n_joints must be even, got {}", self.n_joints)));
        }
        for (name, (lo, hi)) in [("hip_limits", self.hip_limits), ("knee_limits", self.knee_limits)] {
            if lo > hi {
                return Err(SimError::InvalidConfig(format!("{name} lower bound exceeds upper")));
            }
        }
        Ok(())
    }

    pub fn crouched_height(&self) -> f64 {
        self.height_at_drop(self.crouch_drop)
    }

    /// Crawler height (feet to head top) for a given vertical leg drop on flat ground.
    pub fn height_at_drop(&self, drop: f64) -> f64 {
        drop + self.hip_height_offset + self.head_box.z_max
    }
}

/// Vector dimensions derived from a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObsDims {
    pub n_joints: usize,
    pub proprio: usize,
    pub history: usize,
    pub collision: usize,
    pub n_feet: usize,
    /// Privileged vector before the scan encodings.
    pub privileged_low: usize,
    pub ground_latent: usize,
    pub space_latent: usize,
    pub latent: usize,
    pub velocity: usize,
    pub command: usize,
}

pub const HISTORY_LEN: usize = 5;

impl ObsDims {
    pub fn new(n_joints: usize, n_hips: usize, n_feet: usize) -> Self {
        let proprio = 6 + 3 * n_joints;
        let collision = 2 + n_hips;
        ObsDims {
            n_joints,
            proprio,
            history: HISTORY_LEN * proprio,
            collision,
            n_feet,
            privileged_low: proprio + 3 + collision + 1 + 3 * n_feet + 3 + 3,
            ground_latent: 187,
            space_latent: 90,
            latent: 20,
            velocity: 3,
            command: 3,
        }
    }

    pub fn privileged(&self) -> usize {
        self.privileged_low + self.ground_latent + self.space_latent
    }

    pub fn critic_input(&self) -> usize {
        self.command + self.privileged()
    }

    pub fn actor_input(&self) -> usize {
        self.command + self.proprio + self.velocity + self.collision + self.latent
    }

    pub fn decoder_input(&self) -> usize {
        self.velocity + self.collision + self.latent
    }

    pub fn feature_input(&self) -> usize {
        self.ground_latent + self.space_latent
    }
}
