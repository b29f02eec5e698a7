use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sensing::PolarScan;

use super::config::HISTORY_LEN;
use super::contact::CollisionState;

/// Deployable proprioception: angular velocity, projected gravity, joint
/// positions and velocities, previous action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprioFrame {
    pub omega: [f64; 3],
    pub gravity: [f64; 3],
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub prev_action: Vec<f64>,
}

impl ProprioFrame {
    pub fn zeros(n_joints: usize) -> Self {
        ProprioFrame {
            omega: [0.0; 3],
            gravity: [0.0; 3],
            q: vec![0.0; n_joints],
            qdot: vec![0.0; n_joints],
            prev_action: vec![0.0; n_joints],
        }
    }

    pub fn dim(&self) -> usize {
        6 + self.q.len() + self.qdot.len() + self.prev_action.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.omega);
        v.extend_from_slice(&self.gravity);
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.qdot);
        v.extend_from_slice(&self.prev_action);
        v
    }
}

/// The five most recent observed frames, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    frames: VecDeque<Vec<f64>>,
    dim: usize,
}

impl History {
    /// Zero-padded ring holding `newest` as its only real frame.
    pub fn reset(newest: &ProprioFrame) -> Self {
        let dim = newest.dim();
        let mut frames: VecDeque<Vec<f64>> = (0..HISTORY_LEN - 1).map(|_| vec![0.0; dim]).collect();
        frames.push_back(newest.to_vec());
        History { frames, dim }
    }

    pub fn push(&mut self, frame: &ProprioFrame) {
        self.frames.pop_front();
        self.frames.push_back(frame.to_vec());
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(HISTORY_LEN * self.dim);
        for f in &self.frames {
            v.extend_from_slice(f);
        }
        v
    }

    pub fn newest(&self) -> &[f64] {
        self.frames.back().expect("history is never empty")
    }
}

/// What the deployed actor may read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorObservation {
    pub command: [f64; 3],
    pub proprio: ProprioFrame,
    pub history: Vec<f64>,
}

/// Simulator ground truth for the critic and the estimator targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivilegedState {
    pub proprio: ProprioFrame,
    /// Base linear velocity in the base frame.
    pub velocity: [f64; 3],
    pub collisions: CollisionState,
    pub base_height: f64,
    pub external_force: [f64; 3],
    /// Push application point in the base frame.
    pub external_force_pos: [f64; 3],
    pub scans: Option<(PolarScan, PolarScan)>,
}

impl PrivilegedState {
    /// Everything except the scans, in the critic's field order.
    pub fn low_dim_vector(&self) -> Vec<f64> {
        let mut v = self.proprio.to_vec();
        v.extend_from_slice(&self.velocity);
        v.extend(self.collisions.body_vector());
        v.push(self.base_height);
        v.extend(self.collisions.foot_forces_flat());
        v.extend_from_slice(&self.external_force);
        v.extend_from_slice(&self.external_force_pos);
        v
    }
}
