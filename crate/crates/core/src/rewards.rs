//! Reward terms: velocity tracking, whole-body collision penalties, the
//! post-collision velocity reward and the regularizers.

use serde::{Deserialize, Serialize};

use crate::simenv::contact::{horizontal_norm, CollisionState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub tracking: f64,
    pub collision_ra: f64,
    pub collision_su: f64,
    pub pcv: f64,
    pub action_rate: f64,
    pub action_accel: f64,
    pub torques: f64,
    pub joint_vel: f64,
    pub joint_accel: f64,
    pub angvel_xy: f64,
    pub linvel_z: f64,
    pub proj_gravity_xy: f64,
    pub foot_slip: f64,
    /// Force-penalty scales for head, base and hips.
    pub lambda: [f64; 3],
    /// Force normalizers for head, base and hips, 1/N.
    pub mu: [f64; 3],
    pub yaw_tracking: f64,
    pub yaw_tracking_enabled: bool,
    /// Leaves planted feet out of the leg collision count.
    pub exclude_stance_foot_contact: bool,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            tracking: 1.0,
            collision_ra: -2.5,
            collision_su: -2.5,
            pcv: 5.0,
            action_rate: -0.06,
            action_accel: -0.05,
            torques: -1e-4,
            joint_vel: -6e-4,
            joint_accel: -2e-7,
            angvel_xy: -0.03,
            linvel_z: -3.0,
            proj_gravity_xy: -1.0,
            foot_slip: -0.5,
            lambda: [1.0; 3],
            mu: [0.02; 3],
            yaw_tracking: 0.5,
            yaw_tracking_enabled: true,
            exclude_stance_foot_contact: false,
        }
    }
}

impl RewardWeights {
    /// Planar crawler: no yaw command, and feet are always planted.
    pub fn crawler() -> Self {
        RewardWeights { yaw_tracking_enabled: false, exclude_stance_foot_contact: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking: f64,
    pub collision_ra: f64,
    pub collision_su: f64,
    pub pcv: f64,
    pub action_rate: f64,
    pub action_accel: f64,
    pub torques: f64,
    pub joint_vel: f64,
    pub joint_accel: f64,
    pub angvel_xy: f64,
    pub linvel_z: f64,
    pub proj_gravity_xy: f64,
    pub foot_slip: f64,
    pub yaw_tracking: f64,
    pub weighted_total: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 14] = [
        "tracking",
        "collision_ra",
        "collision_su",
        "pcv",
        "action_rate",
        "action_accel",
        "torques",
        "joint_vel",
        "joint_accel",
        "angvel_xy",
        "linvel_z",
        "proj_gravity_xy",
        "foot_slip",
        "yaw_tracking",
    ];

    /// Adds every term of `other`, including the weighted total.
    pub fn accumulate(&mut self, other: &RewardBreakdown) {
        self.map_with(other, |a, b| a + b);
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = *self;
        out.map_with(self, |_, b| b * k);
        out
    }

    fn map_with(&mut self, other: &RewardBreakdown, f: impl Fn(f64, f64) -> f64) {
        let fields = [
            (&mut self.tracking, other.tracking),
            (&mut self.collision_ra, other.collision_ra),
            (&mut self.collision_su, other.collision_su),
            (&mut self.pcv, other.pcv),
            (&mut self.action_rate, other.action_rate),
            (&mut self.action_accel, other.action_accel),
            (&mut self.torques, other.torques),
            (&mut self.joint_vel, other.joint_vel),
            (&mut self.joint_accel, other.joint_accel),
            (&mut self.angvel_xy, other.angvel_xy),
            (&mut self.linvel_z, other.linvel_z),
            (&mut self.proj_gravity_xy, other.proj_gravity_xy),
            (&mut self.foot_slip, other.foot_slip),
            (&mut self.yaw_tracking, other.yaw_tracking),
            (&mut self.weighted_total, other.weighted_total),
        ];
        for (a, b) in fields {
            *a = f(*a, b);
        }
    }

    pub fn terms(&self) -> [f64; 14] {
        [
            self.tracking,
            self.collision_ra,
            self.collision_su,
            self.pcv,
            self.action_rate,
            self.action_accel,
            self.torques,
            self.joint_vel,
            self.joint_accel,
            self.angvel_xy,
            self.linvel_z,
            self.proj_gravity_xy,
            self.foot_slip,
            self.yaw_tracking,
        ]
    }
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn reward_tracking(v_xy: [f64; 2], cmd_xy: [f64; 2]) -> f64 {
    let e = [v_xy[0] - cmd_xy[0], v_xy[1] - cmd_xy[1]];
    (-4.0 * squared_norm(&e)).exp()
}

pub fn reward_yaw_tracking(omega_z: f64, cmd_omega_z: f64) -> f64 {
    (-4.0 * (omega_z - cmd_omega_z).powi(2)).exp()
}

pub fn reward_leg_collision(c: &CollisionState, exclude_stance_foot: bool) -> f64 {
    c.legs
        .iter()
        .map(|l| {
            let foot = l.foot && !exclude_stance_foot;
            f64::from(u8::from(foot) + u8::from(l.thigh) + u8::from(l.shank))
        })
        .sum()
}

pub fn reward_body_collision(c: &CollisionState, lambda: [f64; 3], mu: [f64; 3]) -> f64 {
    let hip_force: f64 = c.hip_forces.iter().map(horizontal_norm).sum();
    let forces = lambda[0] * (1.0 - (-mu[0] * horizontal_norm(&c.head_force)).exp())
        + lambda[1] * (1.0 - (-mu[1] * horizontal_norm(&c.base_force)).exp())
        + lambda[2] * (1.0 - (-mu[2] * hip_force).exp());
    forces + c.body_vector().iter().sum::<f64>()
}

pub fn reward_pcv(in_window: bool, v_xy: [f64; 2], cmd_xy: [f64; 2]) -> f64 {
    if in_window {
        -(v_xy[0] * cmd_xy[0] + v_xy[1] * cmd_xy[1])
    } else {
        0.0
    }
}

/// Quantities the regularizer rows read from the simulator.
#[derive(Debug, Clone, Copy)]
pub struct RegularizerInputs<'a> {
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    pub prev_prev_action: &'a [f64],
    pub torques: &'a [f64],
    pub qdot: &'a [f64],
    pub qddot: &'a [f64],
    pub omega_xy: [f64; 2],
    pub v_z: f64,
    pub gravity_xy: [f64; 2],
    pub foot_velocities: &'a [[f64; 2]],
    pub stance: &'a [bool],
}

/// Fills the regularizer rows of a breakdown; other rows are zero.
pub fn reward_regularizers(x: &RegularizerInputs<'_>) -> RewardBreakdown {
    let rate: Vec<f64> = x.action.iter().zip(x.prev_action).map(|(a, b)| a - b).collect();
    let accel: Vec<f64> = x
        .action
        .iter()
        .zip(x.prev_action)
        .zip(x.prev_prev_action)
        .map(|((a, b), c)| a - 2.0 * b + c)
        .collect();
    let foot_slip = x
        .foot_velocities
        .iter()
        .zip(x.stance)
        .filter(|(_, &s)| s)
        .map(|(v, _)| squared_norm(v))
        .sum();
    RewardBreakdown {
        action_rate: squared_norm(&rate),
        action_accel: squared_norm(&accel),
        torques: squared_norm(x.torques),
        joint_vel: squared_norm(x.qdot),
        joint_accel: squared_norm(x.qddot),
        angvel_xy: squared_norm(&x.omega_xy),
        linvel_z: x.v_z * x.v_z,
        proj_gravity_xy: squared_norm(&x.gravity_xy),
        foot_slip,
        ..RewardBreakdown::default()
    }
}

pub fn total(b: &RewardBreakdown, w: &RewardWeights) -> f64 {
    let yaw = if w.yaw_tracking_enabled { w.yaw_tracking * b.yaw_tracking } else { 0.0 };
    w.tracking * b.tracking
        + w.collision_ra * b.collision_ra
        + w.collision_su * b.collision_su
        + w.pcv * b.pcv
        + w.action_rate * b.action_rate
        + w.action_accel * b.action_accel
        + w.torques * b.torques
        + w.joint_vel * b.joint_vel
        + w.joint_accel * b.joint_accel
        + w.angvel_xy * b.angvel_xy
        + w.linvel_z * b.linvel_z
        + w.proj_gravity_xy * b.proj_gravity_xy
        + w.foot_slip * b.foot_slip
        + yaw
}

/// All inputs for one step's breakdown.
#[derive(Debug, Clone, Copy)]
pub struct StepRewardInputs<'a> {
    pub v_xy: [f64; 2],
    pub cmd_xy: [f64; 2],
    pub omega_z: f64,
    pub cmd_omega_z: f64,
    pub collisions: &'a CollisionState,
    pub in_pcv_window: bool,
    pub regularizers: RegularizerInputs<'a>,
}

pub fn compute(x: &StepRewardInputs<'_>, w: &RewardWeights) -> RewardBreakdown {
    let mut b = reward_regularizers(&x.regularizers);
    b.tracking = reward_tracking(x.v_xy, x.cmd_xy);
    b.yaw_tracking = reward_yaw_tracking(x.omega_z, x.cmd_omega_z);
    b.collision_ra = reward_leg_collision(x.collisions, w.exclude_stance_foot_contact);
    b.collision_su = reward_body_collision(x.collisions, w.lambda, w.mu);
    b.pcv = reward_pcv(x.in_pcv_window, x.v_xy, x.cmd_xy);
    b.weighted_total = total(&b, w);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::contact::LegContacts;
    use approx::assert_relative_eq;

    fn quiet(n_hips: usize, n_legs: usize) -> CollisionState {
        CollisionState::empty(n_hips, n_legs)
    }

    #[test]
    fn tracking_examples() {
        assert_eq!(reward_tracking([0.3, -0.1], [0.3, -0.1]), 1.0);
        assert_relative_eq!(reward_tracking([0.5, 0.0], [1.0, 0.0]), 0.367_879_441_171_442_3, epsilon = 1e-12);
        assert_eq!(reward_tracking([0.0, 0.0], [0.0, 0.0]), 1.0);
    }

    #[test]
    fn leg_collision_counts_indicators() {
        let mut c = quiet(4, 4);
        assert_eq!(reward_leg_collision(&c, false), 0.0);
        c.legs[2].shank = true;
        assert_eq!(reward_leg_collision(&c, false), 1.0);
        c.legs = vec![LegContacts { foot: true, thigh: true, shank: true }; 4];
        assert_eq!(reward_leg_collision(&c, false), 12.0);
        assert_eq!(reward_leg_collision(&c, true), 8.0);
    }

    #[test]
    fn body_collision_examples() {
        let w = RewardWeights::default();
        let mut c = quiet(4, 4);
        assert_eq!(reward_body_collision(&c, w.lambda, w.mu), 0.0);
        c.head = true;
        c.head_force = [50.0, 0.0, 0.0];
        assert_relative_eq!(reward_body_collision(&c, w.lambda, w.mu), 1.632_120_558_828_557_7, epsilon = 1e-12);
        c.base = true;
        c.base_force = [0.0, 1e6, 0.0];
        c.hips = vec![true; 4];
        c.hip_forces = vec![[1e6, 1e6, 0.0]; 4];
        c.head_force = [1e6, 0.0, 0.0];
        assert_relative_eq!(reward_body_collision(&c, w.lambda, w.mu), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn pcv_examples() {
        assert_eq!(reward_pcv(false, [-0.4, 0.0], [1.0, 0.0]), 0.0);
        assert_relative_eq!(reward_pcv(true, [-0.4, 0.0], [1.0, 0.0]), 0.4, epsilon = 1e-15);
        assert_relative_eq!(reward_pcv(true, [0.3, 0.0], [1.0, 0.0]), -0.3, epsilon = 1e-15);
    }

    fn level_inputs<'a>(a: &'a [f64], zeros: &'a [f64], feet: &'a [[f64; 2]], stance: &'a [bool]) -> RegularizerInputs<'a> {
        RegularizerInputs {
            action: a,
            prev_action: a,
            prev_prev_action: a,
            torques: zeros,
            qdot: zeros,
            qddot: zeros,
            omega_xy: [0.0; 2],
            v_z: 0.0,
            gravity_xy: [0.0; 2],
            foot_velocities: feet,
            stance,
        }
    }

    #[test]
    fn regularizer_examples() {
        let a = [0.2, -0.1, 0.0, 0.3];
        let zeros = [0.0; 4];
        let feet = [[0.0; 2]; 2];
        let stance = [true; 2];
        let still = reward_regularizers(&level_inputs(&a, &zeros, &feet, &stance));
        assert_eq!(still.terms(), [0.0; 14]);

        let prev = [0.1, -0.1, 0.0, 0.3];
        let x = RegularizerInputs { prev_action: &prev, ..level_inputs(&a, &zeros, &feet, &stance) };
        assert_relative_eq!(reward_regularizers(&x).action_rate, 0.01, epsilon = 1e-15);

        let s = 30f64.to_radians().sin();
        let x = RegularizerInputs { gravity_xy: [-s, 0.0], ..level_inputs(&a, &zeros, &feet, &stance) };
        assert_relative_eq!(reward_regularizers(&x).proj_gravity_xy, 0.25, epsilon = 1e-15);

        let slipping = [[0.3, 0.0], [0.4, 0.0]];
        let x = RegularizerInputs { foot_velocities: &slipping, stance: &[true, false], ..level_inputs(&a, &zeros, &feet, &stance) };
        assert_relative_eq!(reward_regularizers(&x).foot_slip, 0.09, epsilon = 1e-15);
    }

    #[test]
    fn total_examples() {
        let w = RewardWeights::crawler();
        let b = RewardBreakdown { tracking: 1.0, ..Default::default() };
        assert_eq!(total(&b, &w), 1.0);
        let b = RewardBreakdown { tracking: 1.0, collision_ra: 2.0, ..Default::default() };
        assert_eq!(total(&b, &w), -4.0);
        let b = RewardBreakdown { pcv: 0.4, ..Default::default() };
        assert_relative_eq!(total(&b, &w), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn yaw_term_only_when_enabled() {
        let b = RewardBreakdown { yaw_tracking: 1.0, ..Default::default() };
        assert_eq!(total(&b, &RewardWeights::default()), 0.5);
        assert_eq!(total(&b, &RewardWeights::crawler()), 0.0);
    }
}
