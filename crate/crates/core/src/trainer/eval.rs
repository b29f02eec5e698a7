//! Deterministic evaluation of a trained agent on a fixed terrain.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rewards::RewardWeights;
use crate::simenv::{CrawlerConfig, CrawlerEnv, EpisodeSetup, Observation, SimError, StepInfo};
use crate::terrain::TerrainSpec;

use super::{Agent, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// `None` evaluates on open flat ground.
    pub terrain: Option<TerrainSpec>,
    pub episodes: usize,
    pub direction: Direction,
    /// Commanded forward speed magnitude, m/s.
    pub speed: f64,
    pub seed: u64,
    pub segment_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub success: bool,
    pub fault: bool,
    pub elapsed: f64,
    pub traversal: f64,
    pub progress: f64,
    pub mean_tracking: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeReport>,
    pub success_rate: f64,
    /// Mean elapsed time over successful episodes, s.
    pub mean_success_time: Option<f64>,
    pub mean_traversal: f64,
    /// Mean per-step tracking reward over all episodes.
    pub mean_tracking: f64,
    /// Per-component collision-state accuracy of the estimator at threshold 0.5.
    pub collision_accuracy: f64,
    /// Number of (step, component) pairs compared.
    pub collision_samples: usize,
    /// Fraction of true collision components among all compared ones.
    pub collision_positive_rate: f64,
    /// Fraction of true collision components the estimator flags.
    pub collision_recall: Option<f64>,
}

struct Running {
    env: CrawlerEnv,
    obs: Observation,
    last: Option<StepInfo>,
    tracking: f64,
    steps: usize,
    done: bool,
}

/// Runs `cfg.episodes` episodes in lockstep with the mean action. Episode
/// `i` uses RNG stream `i`, so reports do not depend on thread count.
pub fn evaluate(
    agent: &Agent,
    robot: &CrawlerConfig,
    weights: RewardWeights,
    action_scale: f64,
    cfg: &EvalConfig,
) -> Result<EvalReport, TrainError> {
    let robot = Arc::new(robot.clone());
    let vx = match cfg.direction {
        Direction::Forward => cfg.speed,
        Direction::Backward => -cfg.speed,
    };
    let mut runs = (0..cfg.episodes)
        .map(|i| {
            let mut env = CrawlerEnv::new(Arc::clone(&robot), weights, cfg.segment_length, cfg.seed, i as u64)?;
            env.set_compute_scans(false);
            let obs = env.reset(EpisodeSetup { terrain: cfg.terrain, command: [vx, 0.0, 0.0] })?;
            Ok(Running { env, obs, last: None, tracking: 0.0, steps: 0, done: false })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let nj = agent.n_joints();
    let (mut correct, mut total, mut positives, mut hits) = (0usize, 0usize, 0usize, 0usize);
    while runs.iter().any(|r| !r.done) {
        let live: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].done).collect();
        let obs: Vec<_> = live.iter().map(|&i| &runs[i].obs.actor).collect();
        let (means, est) = agent.act_mean(&obs)?;
        let nc = agent.ppl.dims.n_collision;
        for (k, &i) in live.iter().enumerate() {
            let truth = runs[i].obs.privileged.collisions.body_vector();
            for (p, t) in est.c[k * nc..(k + 1) * nc].iter().zip(truth.iter()) {
                let (flag, truth) = (*p >= 0.5, *t >= 0.5);
                correct += usize::from(flag == truth);
                positives += usize::from(truth);
                hits += usize::from(flag && truth);
                total += 1;
            }
        }
        let mut live_runs: Vec<(&mut Running, &[f32])> = runs
            .iter_mut()
            .filter(|r| !r.done)
            .zip(means.chunks_exact(nj))
            .collect();
        live_runs.par_iter_mut().try_for_each(|(run, a)| -> Result<(), SimError> {
            let action: Vec<f64> = a.iter().map(|&x| f64::from(x) * action_scale).collect();
            let out = run.env.step(&action)?;
            run.tracking += out.reward.tracking;
            run.steps += 1;
            run.done = out.done();
            run.last = Some(out.info);
            run.obs = out.observation;
            Ok(())
        })?;
    }

    let episodes: Vec<EpisodeReport> = runs
        .iter()
        .map(|r| {
            let info = r.last.as_ref().expect("every episode takes a step");
            EpisodeReport {
                success: info.success,
                fault: info.fault,
                elapsed: info.elapsed,
                traversal: info.traversal,
                progress: info.progress,
                mean_tracking: r.tracking / r.steps as f64,
            }
        })
        .collect();
    let n = episodes.len().max(1) as f64;
    let wins: Vec<f64> = episodes.iter().filter(|e| e.success).map(|e| e.elapsed).collect();
    Ok(EvalReport {
        success_rate: wins.len() as f64 / n,
        mean_success_time: (!wins.is_empty()).then(|| wins.iter().sum::<f64>() / wins.len() as f64),
        mean_traversal: episodes.iter().map(|e| e.traversal).sum::<f64>() / n,
        mean_tracking: episodes.iter().map(|e| e.mean_tracking).sum::<f64>() / n,
        collision_accuracy: correct as f64 / total.max(1) as f64,
        collision_samples: total,
        collision_positive_rate: positives as f64 / total.max(1) as f64,
        collision_recall: (positives > 0).then(|| hits as f64 / positives as f64),
        episodes,
    })
}
