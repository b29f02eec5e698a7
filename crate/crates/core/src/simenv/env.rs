use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rewards::{self, RegularizerInputs, RewardBreakdown, RewardWeights, StepRewardInputs};
use crate::sensing::{self, SensorPose};
use crate::terrain::{build_profile_with_length, TerrainProfile, TerrainSpec};

use super::config::{CrawlerConfig, Profile};
use super::contact::{
    body_parts, ground_penetration, leg_ground_contacts, slab_penetration, static_foot_loads, BodyPart,
    CollisionState, LegContacts, CONTACT_TOLERANCE,
};
use super::kinematics::{feet_in_base, knee_for_drop, leg_drop, leg_lean, solve_pose, Pose};
use super::observation::{ActorObservation, History, PrivilegedState, ProprioFrame};
use super::stuck::StuckTracker;
use super::SimError;

const GAIT_FREQUENCY_HZ: f64 = 2.0;
const BISECTION_STEPS: usize = 30;
const PRESS_ITERATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    /// `None` runs on open flat ground.
    pub terrain: Option<TerrainSpec>,
    pub command: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Push {
    pub start_tick: u32,
    pub end_tick: u32,
    pub force: f64,
    pub position: [f64; 3],
}

/// Per-episode domain randomization draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDraws {
    pub foot_friction: f64,
    pub gain_scale: f64,
    pub joint_friction: f64,
    pub joint_armature: f64,
    pub delay_steps: u32,
    pub next_push_tick: u32,
    pub push: Option<Push>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pose: Pose,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub prev_prev_action: Vec<f64>,
    pub command: [f64; 3],
    pub gait_phase: f64,
    pub tick: u32,
    pub stuck: StuckTracker,
    pub terrain: Option<TerrainSpec>,
    pub draws: EpisodeDraws,
    pub history: History,
    /// Undelayed frame of the previous step.
    pub last_frame: ProprioFrame,
    pub spawn_x: f64,
    pub max_traversal: f64,
    /// Base-frame velocity and contact state from the last step.
    pub last_velocity: [f64; 3],
    pub last_collisions: CollisionState,
    pub done: bool,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub actor: ActorObservation,
    pub privileged: PrivilegedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub pose: Pose,
    pub success: bool,
    pub fault: bool,
    /// Largest fraction of the featured region the leading body edge reached.
    pub traversal: f64,
    /// Displacement along the command direction since spawn, m.
    pub progress: f64,
    /// Room along the command direction from spawn to the tile bound, m.
    pub available_distance: f64,
    pub elapsed: f64,
    pub in_pcv_window: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    /// Episode ended in a failure state; no bootstrapping.
    pub terminated: bool,
    /// Episode cut short by time, success or tile bounds; bootstrap from the final state.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub gait_phase: f64,
    pub action: Vec<f64>,
    pub reward: RewardBreakdown,
    pub collisions: Vec<u8>,
}

/// Single quasi-static crawler environment; owns its state and RNG.
#[derive(Debug, Clone)]
pub struct CrawlerEnv {
    cfg: Arc<CrawlerConfig>,
    weights: RewardWeights,
    segment_length: f64,
    profile: Arc<TerrainProfile>,
    state: EnvState,
    rng: ChaCha8Rng,
    compute_scans: bool,
}

impl CrawlerEnv {
    pub fn new(
        cfg: Arc<CrawlerConfig>,
        weights: RewardWeights,
        segment_length: f64,
        seed: u64,
        stream: u64,
    ) -> Result<Self, SimError> {
        if cfg.profile != Profile::Crawler {
            return Err(SimError::UnsupportedProfile(cfg.profile.name()));
        }
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let profile = Arc::new(TerrainProfile::open(segment_length));
        let state = initial_state(&cfg, &profile, EpisodeSetup { terrain: None, command: [0.0; 3] }, &mut rng);
        Ok(CrawlerEnv { cfg, weights, segment_length, profile, state, rng, compute_scans: true })
    }

    /// Rebuilds an environment from a saved state and RNG.
    pub fn restore(
        cfg: Arc<CrawlerConfig>,
        weights: RewardWeights,
        segment_length: f64,
        state: EnvState,
        rng: ChaCha8Rng,
    ) -> Result<Self, SimError> {
        let profile = match &state.terrain {
            Some(spec) => Arc::new(build_profile_with_length(spec, segment_length)?),
            None => Arc::new(TerrainProfile::open(segment_length)),
        };
        Ok(CrawlerEnv { cfg, weights, segment_length, profile, state, rng, compute_scans: true })
    }

    pub fn set_compute_scans(&mut self, on: bool) {
        self.compute_scans = on;
    }

    pub fn config(&self) -> &CrawlerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn profile(&self) -> &TerrainProfile {
        &self.profile
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn reset(&mut self, setup: EpisodeSetup) -> Result<Observation, SimError> {
        let profile = match &setup.terrain {
            Some(spec) => build_profile_with_length(spec, self.segment_length)?,
            None => TerrainProfile::open(self.segment_length),
        };
        self.profile = Arc::new(profile);
        self.state = initial_state(&self.cfg, &self.profile, setup, &mut self.rng);
        self.state.last_collisions = self.resting_collisions();
        Ok(self.observation())
    }

    /// Current observation without stepping.
    pub fn observation(&self) -> Observation {
        self.observe(&self.state.last_frame, self.state.last_velocity, self.state.last_collisions.clone())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, SimError> {
        if self.state.done {
            return Err(SimError::EpisodeOver);
        }
        let cfg = Arc::clone(&self.cfg);
        let n = cfg.n_joints;
        if action.len() != n {
            return Err(SimError::ActionLength { expected: n, got: action.len() });
        }
        let dt = cfg.control_dt;
        let tick = self.state.tick + 1;
        if action.iter().any(|a| !a.is_finite()) {
            return Ok(self.fault_outcome(tick));
        }

        // joint targets and first-order tracking
        let defaults = cfg.default_joints();
        let targets: Vec<f64> = (0..n)
            .map(|j| {
                let (lo, hi) = cfg.joint_limits(j);
                (defaults[j] + action[j]).clamp(lo, hi)
            })
            .collect();
        let draws = self.state.draws.clone();
        let q_start = self.state.q.clone();
        let mut q = q_start.clone();
        let damping = 1.0 + cfg.lag_damping_gain * (draws.joint_friction + draws.joint_armature);
        let sub_dt = dt / cfg.substeps as f64;
        let alpha = 1.0 - (-sub_dt * draws.gain_scale / (cfg.tracking_time_constant * damping)).exp();
        for _ in 0..cfg.substeps {
            for (qj, tj) in q.iter_mut().zip(&targets) {
                *qj += alpha * (tj - *qj);
            }
        }

        // gait propulsion
        let push = draws.push.filter(|p| (p.start_tick..p.end_tick).contains(&tick));
        let push_velocity = push.map_or(0.0, |p| p.force * cfg.randomization.push_velocity_gain);
        let gait_speed = self.gait_speed(&q);
        let traction = 1.0 - cfg.traction_loss * (1.0 - draws.foot_friction);
        let intended = gait_speed * traction + push_velocity;

        // unilateral advance against the ceiling faces
        let parts = body_parts(&cfg);
        let profile = Arc::clone(&self.profile);
        let x0 = self.state.pose.x;
        let pitch0 = self.state.pose.pitch;
        let horizontal = |pose: &Pose| -> Vec<f64> {
            parts.iter().map(|(_, r)| slab_penetration(&profile, pose, r, cfg.ceiling_chamfer).horizontal).collect()
        };
        let here = solve_pose(&cfg, &q, &profile, x0, pitch0);
        let h_here: f64 = horizontal(&here.pose).iter().sum();
        let dx = intended * dt;
        let attempt = solve_pose(&cfg, &q, &profile, x0 + dx, here.pose.pitch);
        let h_attempt = horizontal(&attempt.pose);
        let mut x_new = x0 + dx;
        let mut overlap = vec![0.0; parts.len()];
        if h_attempt.iter().sum::<f64>() > h_here + CONTACT_TOLERANCE {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let p = solve_pose(&cfg, &q, &profile, x0 + mid * dx, here.pose.pitch);
                if horizontal(&p.pose).iter().sum::<f64>() > h_here + CONTACT_TOLERANCE {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            x_new = x0 + lo * dx;
            let realized = solve_pose(&cfg, &q, &profile, x_new, here.pose.pitch);
            let h_real = horizontal(&realized.pose);
            for (o, (a, r)) in overlap.iter_mut().zip(h_attempt.iter().zip(&h_real)) {
                *o = (a - r).max(0.0);
            }
        }
        // the tile end behind the commanded direction is a wall
        let margin = cfg.bounds_margin;
        x_new = if self.state.command[0] >= 0.0 { x_new.max(margin) } else { x_new.min(self.segment_length - margin) };
        let push_back = -dx.signum() * cfg.contact_stiffness;
        let horizontal_forces: Vec<f64> = overlap.iter().map(|o| push_back * o).collect();
        let total_fx: f64 = horizontal_forces.iter().sum();

        // legs give way under the horizontal load
        if total_fx != 0.0 {
            for leg in 0..n / 2 {
                let (lo, hi) = cfg.hip_limits;
                q[2 * leg] = (q[2 * leg] + cfg.hip_compliance * total_fx).clamp(lo, hi);
            }
        }

        let mut sol = solve_pose(&cfg, &q, &profile, x_new, here.pose.pitch);
        let mut fault = sol.fault;

        // the ceiling presses the body down, folding the knees
        let mut vertical_attempt = vec![0.0; parts.len()];
        for iter in 0..PRESS_ITERATIONS {
            let pen: Vec<_> = parts.iter().map(|(_, r)| slab_penetration(&profile, &sol.pose, r, cfg.ceiling_chamfer)).collect();
            if iter == 0 {
                for (v, p) in vertical_attempt.iter_mut().zip(&pen) {
                    *v = p.vertical();
                }
            }
            let front = pen.iter().map(|p| p.vertical_front).fold(0.0, f64::max);
            let rear = pen.iter().map(|p| p.vertical_rear).fold(0.0, f64::max);
            if front <= CONTACT_TOLERANCE && rear <= CONTACT_TOLERANCE {
                break;
            }
            for (leg, press) in [front, rear].into_iter().enumerate() {
                if press > CONTACT_TOLERANCE {
                    let hip = q[2 * leg];
                    let drop = leg_drop(&cfg, hip, q[2 * leg + 1]).max(cfg.min_leg_drop);
                    q[2 * leg + 1] = knee_for_drop(&cfg, hip, (drop - press).max(cfg.min_leg_drop));
                }
            }
            sol = solve_pose(&cfg, &q, &profile, x_new, sol.pose.pitch);
            fault |= sol.fault;
        }
        let pose = sol.pose;

        // collision states and synthetic forces
        let mut collisions = CollisionState::empty(cfg.hip_boxes.len(), n / 2);
        for (k, (part, rect)) in parts.iter().enumerate() {
            let ground = ground_penetration(&profile, &pose, rect);
            let state = overlap[k] > CONTACT_TOLERANCE
                || vertical_attempt[k] > CONTACT_TOLERANCE
                || ground > CONTACT_TOLERANCE;
            let fz = cfg.contact_stiffness * (ground.max(0.0) - vertical_attempt[k]);
            let force = if state { [horizontal_forces[k], 0.0, fz] } else { [0.0; 3] };
            collisions.set_part(*part, state, force);
        }
        self.fill_leg_contacts(&mut collisions, &pose, &q, -total_fx);

        // kinematic rates
        let v_world = [(pose.x - x0) / dt, (pose.z - self.state.pose.z) / dt];
        let v_base = pose.vector_to_base(v_world);
        let pitch_rate = (pose.pitch - pitch0) / dt;
        let omega = [0.0, -pitch_rate, 0.0];
        let qdot: Vec<f64> = q.iter().zip(&q_start).map(|(a, b)| (a - b) / dt).collect();
        let qddot: Vec<f64> = qdot.iter().zip(&self.state.qdot).map(|(a, b)| (a - b) / dt).collect();
        let (kp, kd) = (cfg.kp * draws.gain_scale, cfg.kd * draws.gain_scale);
        let torques: Vec<f64> =
            (0..n).map(|j| kp * (targets[j] - q[j]) - kd * qdot[j]).collect();
        let slip = gait_speed - (v_world[0] - push_velocity);
        let foot_velocities = vec![[slip, 0.0]; n / 2];
        let stance = vec![true; n / 2];

        // stuck/escape bookkeeping
        let command = self.state.command;
        let cmd_norm = command[0].hypot(command[1]);
        let along = if cmd_norm > 0.0 { (v_base[0] * command[0]) / cmd_norm } else { 0.0 };
        let body_contact = collisions.any_body();
        let blocked = body_contact && cmd_norm > 0.0 && along < cfg.stuck_speed;
        self.state.stuck.update(tick, body_contact, blocked);
        let in_window = self.state.stuck.in_window(tick);

        let gravity = pose.projected_gravity();
        let reward = rewards::compute(
            &StepRewardInputs {
                v_xy: [v_base[0], 0.0],
                cmd_xy: [command[0], command[1]],
                omega_z: omega[2],
                cmd_omega_z: command[2],
                collisions: &collisions,
                in_pcv_window: in_window,
                regularizers: RegularizerInputs {
                    action,
                    prev_action: &self.state.prev_action,
                    prev_prev_action: &self.state.prev_prev_action,
                    torques: &torques,
                    qdot: &qdot,
                    qddot: &qddot,
                    omega_xy: [omega[0], omega[1]],
                    v_z: v_base[1],
                    gravity_xy: [gravity[0], gravity[1]],
                    foot_velocities: &foot_velocities,
                    stance: &stance,
                },
            },
            &self.weights,
        );

        // commit state
        let s = &mut self.state;
        s.pose = pose;
        s.q = q;
        s.qdot = qdot;
        s.prev_prev_action = std::mem::replace(&mut s.prev_action, action.to_vec());
        s.tick = tick;
        s.gait_phase = (s.gait_phase + GAIT_FREQUENCY_HZ * dt).fract();
        self.advance_push_schedule(tick);

        let (success, traversal) = self.progress_through_feature();
        self.state.max_traversal = self.state.max_traversal.max(traversal);
        let terminated = fault || pose.pitch.abs() > cfg.max_pitch;
        let out_of_bounds = if self.state.command[0] >= 0.0 {
            pose.x >= self.segment_length - margin
        } else {
            pose.x <= margin
        };
        let timeout = tick >= cfg.episode_steps();
        let truncated = !terminated && (success || out_of_bounds || timeout);
        self.state.done = terminated || truncated;
        self.state.fault = fault;

        let frame = ProprioFrame {
            omega,
            gravity,
            q: self.state.q.clone(),
            qdot: self.state.qdot.clone(),
            prev_action: action.to_vec(),
        };
        self.state.last_velocity = [v_base[0], 0.0, v_base[1]];
        self.state.last_collisions = collisions;
        let observation = self.observe_after_step(frame);
        Ok(StepOutcome { observation, reward, terminated, truncated, info: self.info(success, in_window) })
    }

    fn gait_speed(&self, q: &[f64]) -> f64 {
        let cfg = &self.cfg;
        let legs = q.len() / 2;
        let mean_drop: f64 =
            q.chunks_exact(2).map(|j| leg_drop(cfg, j[0], j[1]).max(cfg.min_leg_drop)).sum::<f64>() / legs as f64;
        let standing = leg_drop(cfg, cfg.default_hip, cfg.default_knee);
        // shorter legs take shorter strides
        let stride_scale = (mean_drop / standing).clamp(0.2, 1.0);
        (cfg.gait_gain * leg_lean(cfg, q)).clamp(-cfg.max_gait_speed, cfg.max_gait_speed) * stride_scale
    }

    fn fill_leg_contacts(&self, c: &mut CollisionState, pose: &Pose, q: &[f64], body_reaction_x: f64) {
        let cfg = &self.cfg;
        let feet = feet_in_base(cfg, q);
        let fx = pose.to_world(feet[0])[0];
        let rx = pose.to_world(feet[1])[0];
        let loads = static_foot_loads(cfg.mass * cfg.gravity, pose.x, fx, rx);
        let legs = q.len() / 2;
        for leg in 0..legs {
            let (thigh, shank) = leg_ground_contacts(cfg, &self.profile, pose, leg, q[2 * leg], q[2 * leg + 1]);
            c.legs[leg] = LegContacts { foot: true, thigh, shank };
            c.foot_forces[leg] = [body_reaction_x / legs as f64, 0.0, loads[leg.min(1)]];
        }
    }

    fn resting_collisions(&self) -> CollisionState {
        let cfg = &self.cfg;
        let pose = self.state.pose;
        let mut c = CollisionState::empty(cfg.hip_boxes.len(), cfg.n_joints / 2);
        for (part, rect) in body_parts(cfg) {
            let vertical = slab_penetration(&self.profile, &pose, &rect, cfg.ceiling_chamfer).vertical();
            let ground = ground_penetration(&self.profile, &pose, &rect);
            let state = vertical > CONTACT_TOLERANCE || ground > CONTACT_TOLERANCE;
            let force = if state { [0.0, 0.0, cfg.contact_stiffness * (ground - vertical)] } else { [0.0; 3] };
            if state || matches!(part, BodyPart::Head) {
                c.set_part(part, state, force);
            }
        }
        self.fill_leg_contacts(&mut c, &pose, &self.state.q.clone(), 0.0);
        c
    }

    fn advance_push_schedule(&mut self, tick: u32) {
        let cfg = Arc::clone(&self.cfg);
        let r = &cfg.randomization;
        if tick == self.state.draws.next_push_tick {
            let b = cfg.base_box;
            let push = Push {
                start_tick: tick + 1,
                end_tick: tick + 1 + cfg.ticks(r.push_duration),
                force: self.rng.random_range(-r.push_max_force..=r.push_max_force),
                position: [
                    self.rng.random_range(b.x_min..=b.x_max),
                    0.0,
                    self.rng.random_range(b.z_min..=b.z_max),
                ],
            };
            let gap = self.rng.random_range(r.push_interval.0..=r.push_interval.1);
            self.state.draws.push = Some(push);
            self.state.draws.next_push_tick = tick + cfg.ticks(gap).max(1);
        }
    }

    /// Success flag and leading-edge traversal fraction of the featured region.
    fn progress_through_feature(&self) -> (bool, f64) {
        let (start, end) = self.profile.feature_span();
        if end <= start {
            return (false, 0.0);
        }
        let (rear, front) = self.cfg.body_extent();
        let pose = self.state.pose;
        let front_x = pose.to_world([front, 0.0])[0];
        let rear_x = pose.to_world([rear, 0.0])[0];
        let len = end - start;
        if self.state.command[0] >= 0.0 {
            (rear_x > end, ((front_x - start) / len).clamp(0.0, 1.0))
        } else {
            (front_x < start, ((end - rear_x) / len).clamp(0.0, 1.0))
        }
    }

    fn info(&self, success: bool, in_pcv_window: bool) -> StepInfo {
        let s = &self.state;
        let dir = if s.command[0] >= 0.0 { 1.0 } else { -1.0 };
        let margin = self.cfg.bounds_margin;
        let available = if dir > 0.0 { self.segment_length - margin - s.spawn_x } else { s.spawn_x - margin };
        StepInfo {
            pose: s.pose,
            success,
            fault: s.fault,
            traversal: s.max_traversal,
            progress: dir * (s.pose.x - s.spawn_x),
            available_distance: available,
            elapsed: s.tick as f64 * self.cfg.control_dt,
            in_pcv_window,
        }
    }

    fn fault_outcome(&mut self, tick: u32) -> StepOutcome {
        self.state.tick = tick;
        self.state.done = true;
        self.state.fault = true;
        self.state.last_velocity = [0.0; 3];
        let observation = self.observation();
        StepOutcome {
            observation,
            reward: RewardBreakdown::default(),
            terminated: true,
            truncated: false,
            info: self.info(false, false),
        }
    }

    fn observe_after_step(&mut self, frame: ProprioFrame) -> Observation {
        let observed = if self.state.draws.delay_steps > 0 { &self.state.last_frame } else { &frame };
        self.state.history.push(observed);
        self.state.last_frame = frame;
        self.observation()
    }

    fn observe(&self, true_frame: &ProprioFrame, velocity: [f64; 3], collisions: CollisionState) -> Observation {
        let s = &self.state;
        let push = s.draws.push.filter(|p| (p.start_tick..p.end_tick).contains(&s.tick));
        let (external_force, external_force_pos) = match push {
            Some(p) => ([p.force, 0.0, 0.0], p.position),
            None => ([0.0; 3], [0.0; 3]),
        };
        let scans = self
            .compute_scans
            .then(|| sensing::scan(&self.profile, &SensorPose::planar(s.pose.x, s.pose.z, s.pose.pitch)));
        let newest = s.history.newest();
        let n = self.cfg.n_joints;
        let observed = ProprioFrame {
            omega: [newest[0], newest[1], newest[2]],
            gravity: [newest[3], newest[4], newest[5]],
            q: newest[6..6 + n].to_vec(),
            qdot: newest[6 + n..6 + 2 * n].to_vec(),
            prev_action: newest[6 + 2 * n..6 + 3 * n].to_vec(),
        };
        Observation {
            actor: ActorObservation { command: s.command, proprio: observed, history: s.history.to_vec() },
            privileged: PrivilegedState {
                proprio: true_frame.clone(),
                velocity,
                collisions,
                base_height: s.pose.z - self.profile.ground_height(s.pose.x),
                external_force,
                external_force_pos,
                scans,
            },
        }
    }

    pub fn record(&self, outcome: &StepOutcome, action: &[f64]) -> StepRecord {
        let s = &self.state;
        StepRecord {
            t: s.tick as f64 * self.cfg.control_dt,
            x: s.pose.x,
            z: s.pose.z,
            pitch: s.pose.pitch,
            gait_phase: s.gait_phase,
            action: action.to_vec(),
            reward: outcome.reward,
            collisions: outcome.observation.privileged.collisions.body_vector().iter().map(|&b| b as u8).collect(),
        }
    }
}

/// Draws a velocity command from the configured ranges.
pub fn sample_command<R: Rng + ?Sized>(cfg: &CrawlerConfig, rng: &mut R) -> [f64; 3] {
    let mut draw = |(lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let c = &cfg.command;
    [draw(c.vx), draw(c.vy), draw(c.wz)]
}

fn initial_state(cfg: &CrawlerConfig, profile: &TerrainProfile, setup: EpisodeSetup, rng: &mut ChaCha8Rng) -> EnvState {
    let r = &cfg.randomization;
    let mut draw = |range: (f64, f64)| if range.0 < range.1 { rng.random_range(range.0..=range.1) } else { range.0 };
    let foot_friction = draw(r.foot_friction);
    let gain_scale = draw(r.gain_scale);
    let joint_friction = draw(r.joint_friction);
    let joint_armature = draw(r.joint_armature);
    let delay = draw(r.time_delay);
    let first_push = draw(r.push_interval);
    let delay_steps = u32::from(delay >= 0.5 * cfg.control_dt);

    let (start, end) = profile.feature_span();
    let forward = setup.command[0] >= 0.0;
    let spawn_x = match (end > start, forward) {
        (_, true) => cfg.spawn_x,
        (true, false) => end + (start - cfg.spawn_x),
        (false, false) => profile.segment_length() - cfg.spawn_x,
    };
    let q = cfg.default_joints();
    let sol = solve_pose(cfg, &q, profile, spawn_x, 0.0);
    let n = cfg.n_joints;
    let frame = ProprioFrame {
        omega: [0.0; 3],
        gravity: sol.pose.projected_gravity(),
        q: q.clone(),
        qdot: vec![0.0; n],
        prev_action: vec![0.0; n],
    };
    EnvState {
        pose: sol.pose,
        q,
        qdot: vec![0.0; n],
        prev_action: vec![0.0; n],
        prev_prev_action: vec![0.0; n],
        command: setup.command,
        gait_phase: 0.0,
        tick: 0,
        stuck: StuckTracker::new(cfg.ticks(cfg.stuck_sustain_s), cfg.ticks(cfg.pcv_extension_s)),
        terrain: setup.terrain,
        draws: EpisodeDraws {
            foot_friction,
            gain_scale,
            joint_friction,
            joint_armature,
            delay_steps,
            next_push_tick: cfg.ticks(first_push).max(1),
            push: None,
        },
        history: History::reset(&frame),
        last_frame: frame,
        spawn_x,
        max_traversal: 0.0,
        last_velocity: [0.0; 3],
        last_collisions: CollisionState::empty(cfg.hip_boxes.len(), n / 2),
        done: false,
        fault: sol.fault,
    }
}
