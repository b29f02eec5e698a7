//! Actor, critic and estimator networks with their input assembly.
//!
//! The actor input is built only from [`ActorObservation`] and estimator
//! outputs; privileged fields reach the critic and the supervision targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Checkpoint, DenseNet, DenseNetSpec, EstimatorForward, PplDims, PplNet, PplWidths};
use crate::simenv::{ActorObservation, CrawlerConfig, ObsDims, PrivilegedState};

use super::TrainError;

/// Input normalization applied before the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsScales {
    pub omega: f64,
    pub gravity: f64,
    pub joint_pos: f64,
    pub joint_vel: f64,
    pub action: f64,
    pub command: [f64; 3],
    pub velocity: f64,
    pub foot_force: f64,
    pub external_force: f64,
    pub height: f64,
}

impl Default for ObsScales {
    fn default() -> Self {
        ObsScales {
            omega: 0.25,
            gravity: 1.0,
            joint_pos: 1.0,
            joint_vel: 0.05,
            action: 1.0,
            command: [2.0, 2.0, 0.25],
            velocity: 2.0,
            foot_force: 0.01,
            external_force: 0.05,
            height: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub actor: Vec<usize>,
    pub critic: Vec<usize>,
    pub ppl: PplWidths,
    /// Give the larger scan latent to the space encoder.
    pub swap_scan_latents: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            actor: vec![128, 64],
            critic: vec![128, 64],
            ppl: PplWidths {
                proprio_encoder: vec![128, 64],
                proprio_decoder: vec![64, 64],
                ground_encoder: vec![32],
                space_encoder: vec![32],
                feature_encoder: vec![32],
            },
            swap_scan_latents: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub dims: ObsDims,
    pub scales: ObsScales,
    pub defaults: Vec<f64>,
    pub actor: DenseNet<f32>,
    pub critic: DenseNet<f32>,
    pub log_std: Vec<f32>,
    pub ppl: PplNet<f32>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        cfg: &CrawlerConfig,
        net: &NetworkConfig,
        scales: ObsScales,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let dims = cfg.dims();
        let ppl = PplNet::new(PplDims::from_obs(&dims, net.swap_scan_latents), &net.ppl, rng)?;
        let actor = DenseNet::new(DenseNetSpec::new(dims.actor_input(), &net.actor, dims.n_joints), rng, 0.01)?;
        let critic = DenseNet::new(DenseNetSpec::new(dims.critic_input(), &net.critic, 1), rng, 1.0)?;
        Ok(Agent {
            dims,
            scales,
            defaults: cfg.default_joints(),
            actor,
            critic,
            log_std: vec![init_log_std as f32; dims.n_joints],
            ppl,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.dims.n_joints
    }

    /// Scales one raw proprioceptive frame laid out as ω, g, q, q̇, a.
    pub fn push_frame(&self, raw: &[f64], out: &mut Vec<f32>) {
        let n = self.n_joints();
        let s = &self.scales;
        out.extend(raw[0..3].iter().map(|&w| (w * s.omega) as f32));
        out.extend(raw[3..6].iter().map(|&g| (g * s.gravity) as f32));
        out.extend(raw[6..6 + n].iter().zip(&self.defaults).map(|(&q, &d)| ((q - d) * s.joint_pos) as f32));
        out.extend(raw[6 + n..6 + 2 * n].iter().map(|&v| (v * s.joint_vel) as f32));
        out.extend(raw[6 + 2 * n..6 + 3 * n].iter().map(|&a| (a * s.action) as f32));
    }

    pub fn push_command(&self, command: [f64; 3], out: &mut Vec<f32>) {
        out.extend(command.iter().zip(&self.scales.command).map(|(c, s)| (c * s) as f32));
    }

    /// Estimator input: the scaled five-frame history.
    pub fn push_history(&self, obs: &ActorObservation, out: &mut Vec<f32>) {
        for frame in obs.history.chunks_exact(self.dims.proprio) {
            self.push_frame(frame, out);
        }
    }

    /// Actor input: command, newest observed frame and the estimator outputs.
    pub fn push_actor_input(&self, obs: &ActorObservation, v: &[f32], c: &[f32], z: &[f32], out: &mut Vec<f32>) {
        self.push_command(obs.command, out);
        self.push_frame(&obs.proprio.to_vec(), out);
        out.extend_from_slice(v);
        out.extend_from_slice(c);
        out.extend_from_slice(z);
    }

    /// Command and scaled low-dimensional privileged state.
    pub fn push_critic_low(&self, command: [f64; 3], p: &PrivilegedState, out: &mut Vec<f32>) {
        let s = &self.scales;
        self.push_command(command, out);
        self.push_frame(&p.proprio.to_vec(), out);
        out.extend(p.velocity.iter().map(|&v| (v * s.velocity) as f32));
        out.extend(p.collisions.body_vector().iter().map(|&c| c as f32));
        out.push((p.base_height * s.height) as f32);
        out.extend(p.collisions.foot_forces_flat().iter().map(|&f| (f * s.foot_force) as f32));
        out.extend(p.external_force.iter().map(|&f| (f * s.external_force) as f32));
        out.extend(p.external_force_pos.iter().map(|&x| x as f32));
    }

    pub fn critic_low_dim(&self) -> usize {
        self.dims.command + self.dims.privileged_low
    }

    pub fn push_scans(&self, p: &PrivilegedState, ground: &mut Vec<f32>, space: &mut Vec<f32>) -> Result<(), TrainError> {
        let (g, s) = p.scans.as_ref().ok_or(TrainError::MissingScans)?;
        ground.extend_from_slice(&g.values);
        space.extend_from_slice(&s.values);
        Ok(())
    }

    /// Supervision targets for the estimator from the privileged state.
    pub fn push_targets(&self, p: &PrivilegedState, c: &mut Vec<f32>, v: &mut Vec<f32>) {
        c.extend(p.collisions.body_vector().iter().map(|&x| x as f32));
        v.extend(p.velocity.iter().map(|&x| x as f32));
    }

    /// Joins the low-dimensional critic rows with the scan features.
    pub fn critic_input(&self, low: &[f32], zg: &[f32], zs: &[f32], batch: usize) -> Vec<f32> {
        let (wl, wg, ws) = (self.critic_low_dim(), self.ppl.dims.ground_latent, self.ppl.dims.space_latent);
        let mut out = Vec::with_capacity(batch * (wl + wg + ws));
        for b in 0..batch {
            out.extend_from_slice(&low[b * wl..(b + 1) * wl]);
            out.extend_from_slice(&zg[b * wg..(b + 1) * wg]);
            out.extend_from_slice(&zs[b * ws..(b + 1) * ws]);
        }
        out
    }

    /// Estimator pass and actor input rows for a batch of observations.
    pub fn actor_inputs(&self, obs: &[&ActorObservation]) -> Result<(Vec<f32>, EstimatorForward<f32>), TrainError> {
        let batch = obs.len();
        let mut history = Vec::with_capacity(batch * self.dims.history);
        for o in obs {
            self.push_history(o, &mut history);
        }
        let est = self.ppl.estimate(&history, batch)?;
        let d = self.ppl.dims;
        let mut input = Vec::with_capacity(batch * self.dims.actor_input());
        for (b, o) in obs.iter().enumerate() {
            self.push_actor_input(
                o,
                &est.v[b * d.velocity..(b + 1) * d.velocity],
                &est.c[b * d.n_collision..(b + 1) * d.n_collision],
                &est.z[b * d.latent..(b + 1) * d.latent],
                &mut input,
            );
        }
        Ok((input, est))
    }

    /// Deterministic mean actions for a batch of observations.
    pub fn act_mean(&self, obs: &[&ActorObservation]) -> Result<(Vec<f32>, EstimatorForward<f32>), TrainError> {
        let (input, est) = self.actor_inputs(obs)?;
        Ok((self.actor.predict(&input, obs.len())?, est))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            nets: vec![
                self.actor.clone(),
                self.critic.clone(),
                self.ppl.proprio_encoder.clone(),
                self.ppl.proprio_decoder.clone(),
                self.ppl.ground_encoder.clone(),
                self.ppl.space_encoder.clone(),
                self.ppl.feature_encoder.clone(),
            ],
            extras: vec![self.log_std.clone()],
        }
    }

    /// Rebuilds an agent, checking every network against the profile's dimensions.
    pub fn from_checkpoint(cfg: &CrawlerConfig, scales: ObsScales, swap_scan_latents: bool, ckpt: Checkpoint) -> Result<Self, TrainError> {
        let dims = cfg.dims();
        let pdims = PplDims::from_obs(&dims, swap_scan_latents);
        let [actor, critic, enc, dec, ground, space, feature]: [DenseNet<f32>; 7] = ckpt
            .nets
            .try_into()
            .map_err(|v: Vec<_>| TrainError::CheckpointMismatch(format!("expected 7 networks, found {}", v.len())))?;
        let [log_std]: [Vec<f32>; 1] = ckpt
            .extras
            .try_into()
            .map_err(|_| TrainError::CheckpointMismatch("expected one log-std vector".into()))?;
        let expect = |name: &str, net: &DenseNet<f32>, input: usize, output: usize| {
            if net.input_dim() != input || net.output_dim() != output {
                return Err(TrainError::CheckpointMismatch(format!(
                    "{name} is {}→{}, profile needs {input}→{output}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
            Ok(())
        };
        expect("actor", &actor, dims.actor_input(), dims.n_joints)?;
        expect("critic", &critic, dims.critic_input(), 1)?;
        expect("proprio encoder", &enc, pdims.history, pdims.encoder_output())?;
        expect("proprio decoder", &dec, pdims.encoder_output(), pdims.proprio)?;
        expect("ground encoder", &ground, pdims.scan, pdims.ground_latent)?;
        expect("space encoder", &space, pdims.scan, pdims.space_latent)?;
        expect("feature encoder", &feature, pdims.feature_input(), pdims.latent)?;
        if log_std.len() != dims.n_joints {
            return Err(TrainError::CheckpointMismatch(format!("log-std has {} entries", log_std.len())));
        }
        Ok(Agent {
            dims,
            scales,
            defaults: cfg.default_joints(),
            actor,
            critic,
            log_std,
            ppl: PplNet {
                dims: pdims,
                proprio_encoder: enc,
                proprio_decoder: dec,
                ground_encoder: ground,
                space_encoder: space,
                feature_encoder: feature,
            },
        })
    }
}
