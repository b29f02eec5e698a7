//! Rollout storage and collection.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::rewards::RewardBreakdown;
use crate::simenv::{sample_command, CrawlerEnv, EpisodeSetup, Observation, StepOutcome};

use super::curriculum::{draw_terrain, next_level, CurriculumConfig, EpisodeResult};
use super::ppo::gaussian_log_prob;
use super::{TrainError, Trainer};

/// One iteration of experience, row `t · n_envs + e` for step `t` of env `e`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub n_envs: usize,
    pub horizon: usize,
    pub actor_in: Vec<f32>,
    pub history: Vec<f32>,
    pub critic_low: Vec<f32>,
    pub ground: Vec<f32>,
    pub space: Vec<f32>,
    pub actions: Vec<f32>,
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    /// Scaled rewards, with `γ·V` of the final state folded in on truncation.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub target_c: Vec<f32>,
    pub target_v: Vec<f32>,
    pub target_o: Vec<f32>,
    /// Estimated collision probabilities at collection time.
    pub est_c: Vec<f32>,
    /// Value of each env's state after the last step.
    pub bootstrap: Vec<f64>,
    pub stats: RolloutStats,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutStats {
    /// Sum over steps of the unscaled reward terms.
    pub reward_sum: RewardBreakdown,
    pub episodes: usize,
    pub successes: usize,
    pub traversal_sum: f64,
}

/// Result of stepping one environment, plus its reset if the episode ended.
struct EnvStep {
    outcome: StepOutcome,
    next: Option<(Observation, u32)>,
}

/// Starts a fresh episode at `level`, drawing terrain and command from the env's RNG.
pub(crate) fn start_episode(env: &mut CrawlerEnv, curriculum: &CurriculumConfig, level: u32) -> Result<Observation, TrainError> {
    let terrain = draw_terrain(curriculum, level, env.rng_mut())?;
    let command = sample_command(&env.config().clone(), env.rng_mut());
    Ok(env.reset(EpisodeSetup { terrain, command })?)
}

impl Trainer {
    /// Steps every environment `horizon` times with sampled actions.
    pub fn collect(&mut self) -> Result<RolloutBatch, TrainError> {
        let e_count = self.envs.len();
        let horizon = self.cfg.ppo.horizon;
        let n = e_count * horizon;
        let nj = self.agent.n_joints();
        let d = self.agent.dims;
        let mut b = RolloutBatch {
            n_envs: e_count,
            horizon,
            actor_in: Vec::with_capacity(n * d.actor_input()),
            history: Vec::with_capacity(n * d.history),
            critic_low: Vec::with_capacity(n * self.agent.critic_low_dim()),
            ground: Vec::with_capacity(n * crate::sensing::SCAN_LEN),
            space: Vec::with_capacity(n * crate::sensing::SCAN_LEN),
            actions: Vec::with_capacity(n * nj),
            ..Default::default()
        };
        let action_scale = self.cfg.ppo.action_scale;
        let reward_scale = self.cfg.ppo.reward_scale;
        let gamma = self.cfg.ppo.gamma;
        let std: Vec<f32> = self.agent.log_std.iter().map(|l| l.exp()).collect();

        for _ in 0..horizon {
            let obs: Vec<_> = self.obs.iter().map(|o| &o.actor).collect();
            let (actor_in, est) = self.agent.actor_inputs(&obs)?;
            let means = self.agent.actor.predict(&actor_in, e_count)?;
            let mut actions = Vec::with_capacity(e_count * nj);
            for e in 0..e_count {
                let row = &means[e * nj..(e + 1) * nj];
                let a: Vec<f32> = row
                    .iter()
                    .zip(&std)
                    .map(|(&m, &s)| m + s * self.rng.sample::<f32, _>(StandardNormal))
                    .collect();
                b.logp.push(gaussian_log_prob(&a, row, &self.agent.log_std));
                actions.extend(a);
            }
            for o in &self.obs {
                self.agent.push_history(&o.actor, &mut b.history);
                self.agent.push_critic_low(o.actor.command, &o.privileged, &mut b.critic_low);
                self.agent.push_scans(&o.privileged, &mut b.ground, &mut b.space)?;
                self.agent.push_targets(&o.privileged, &mut b.target_c, &mut b.target_v);
            }
            let lo = b.critic_low.len() - e_count * self.agent.critic_low_dim();
            let go = b.ground.len() - e_count * crate::sensing::SCAN_LEN;
            let values = self.values(&b.critic_low[lo..], &b.ground[go..], &b.space[go..], e_count)?;
            b.values.extend(&values);
            b.actor_in.extend_from_slice(&actor_in);
            b.est_c.extend_from_slice(&est.c);

            if actions.iter().any(|a| !a.is_finite()) {
                return Err(TrainError::NonFinite { iteration: self.iteration, what: "sampled action".into() });
            }
            let curriculum = &self.cfg.curriculum;
            let steps: Vec<Result<EnvStep, TrainError>> = {
                let envs = &mut self.envs;
                let levels = &self.levels;
                self.pool.install(|| {
                    envs.par_iter_mut()
                        .zip(actions.par_chunks(nj))
                        .zip(levels.par_iter())
                        .map(|((env, a), &level)| {
                            let scaled: Vec<f64> = a.iter().map(|&x| f64::from(x) * action_scale).collect();
                            let outcome = env.step(&scaled)?;
                            let next = if outcome.done() {
                                let info = outcome.info;
                                let cmd = env.state().command;
                                let commanded = (cmd[0].hypot(cmd[1]) * info.elapsed).min(info.available_distance);
                                let result = EpisodeResult {
                                    traversal: info.traversal,
                                    progress: info.progress,
                                    commanded_distance: commanded,
                                };
                                let new_level = next_level(curriculum, level, &result);
                                Some((start_episode(env, curriculum, new_level)?, new_level))
                            } else {
                                None
                            };
                            Ok(EnvStep { outcome, next })
                        })
                        .collect()
                })
            };
            let steps = steps.into_iter().collect::<Result<Vec<_>, _>>()?;

            let truncated: Vec<usize> = (0..e_count).filter(|&e| steps[e].outcome.truncated).collect();
            let final_values = if truncated.is_empty() {
                Vec::new()
            } else {
                let mut low = Vec::new();
                let (mut g, mut s) = (Vec::new(), Vec::new());
                for &e in &truncated {
                    let o = &steps[e].outcome.observation;
                    self.agent.push_critic_low(o.actor.command, &o.privileged, &mut low);
                    self.agent.push_scans(&o.privileged, &mut g, &mut s)?;
                }
                self.values(&low, &g, &s, truncated.len())?
            };

            b.actions.extend(actions);
            let mut bootstrap_iter = final_values.into_iter();
            for (e, step) in steps.into_iter().enumerate() {
                let o = &step.outcome;
                let mut r = o.reward.weighted_total * reward_scale;
                if o.truncated {
                    r += gamma * bootstrap_iter.next().expect("one value per truncated env");
                }
                b.rewards.push(r);
                b.dones.push(o.done());
                self.agent.push_frame(&o.observation.actor.proprio.to_vec(), &mut b.target_o);
                b.stats.reward_sum.accumulate(&o.reward);
                if o.done() {
                    b.stats.episodes += 1;
                    b.stats.successes += usize::from(o.info.success);
                    b.stats.traversal_sum += o.info.traversal;
                }
                match step.next {
                    Some((obs, level)) => {
                        self.obs[e] = obs;
                        self.levels[e] = level;
                    }
                    None => self.obs[e] = step.outcome.observation,
                }
            }
        }

        let mut low = Vec::new();
        let (mut g, mut s) = (Vec::new(), Vec::new());
        for o in &self.obs {
            self.agent.push_critic_low(o.actor.command, &o.privileged, &mut low);
            self.agent.push_scans(&o.privileged, &mut g, &mut s)?;
        }
        b.bootstrap = self.values(&low, &g, &s, e_count)?;
        Ok(b)
    }

    /// Critic values for a batch of privileged rows.
    pub(crate) fn values(&self, low: &[f32], ground: &[f32], space: &[f32], batch: usize) -> Result<Vec<f64>, TrainError> {
        let zg = self.agent.ppl.ground_encoder.predict(ground, batch)?;
        let zs = self.agent.ppl.space_encoder.predict(space, batch)?;
        let input = self.agent.critic_input(low, &zg, &zs, batch);
        Ok(self.agent.critic.predict(&input, batch)?.into_iter().map(f64::from).collect())
    }
}
