//! PPO with an asymmetric actor-critic, concurrent estimator training and a
//! terrain curriculum.

mod agent;
mod curriculum;
mod eval;
mod ppo;
mod rollout;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{
    decode_checkpoint, encode_checkpoint, ppl_loss, AdamConfig, AdamState, NeuralError, PplLoss,
    PplTargets,
};
use crate::rewards::{RewardBreakdown, RewardWeights};
use crate::simenv::{CrawlerConfig, CrawlerEnv, EnvState, Observation, Profile, SimError};
use crate::terrain::{TerrainError, DEFAULT_SEGMENT_LENGTH, NUM_LEVELS};

pub use agent::{Agent, NetworkConfig, ObsScales};
pub use curriculum::{draw_terrain, next_level, CurriculumConfig, EpisodeResult};
pub use eval::{evaluate, Direction, EpisodeReport, EvalConfig, EvalReport};
pub use ppo::{adapt_lr, clipped_surrogate, gae, gaussian_entropy, gaussian_log_prob, normalize_advantages, PpoConfig};
pub use rollout::{RolloutBatch, RolloutStats};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config key `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { iteration: usize, what: String },
    #[error("privileged observation carries no scans")]
    MissingScans,
    #[error("checkpoint does not match the profile: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed state file: {0}")]
    State(#[from] serde_json::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub profile: Profile,
    pub seed: u64,
    pub envs: usize,
    pub iterations: usize,
    /// Worker threads for environment stepping; 0 uses every core.
    pub workers: usize,
    /// Checkpoint period in iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub segment_length: f64,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub scales: ObsScales,
    pub curriculum: CurriculumConfig,
    pub rewards: RewardWeights,
    pub robot: CrawlerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_profile(Profile::Crawler)
    }
}

impl TrainConfig {
    pub fn for_profile(profile: Profile) -> Self {
        TrainConfig {
            profile,
            seed: 1,
            envs: 64,
            iterations: 3000,
            workers: 0,
            checkpoint_every: 500,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
            scales: ObsScales::default(),
            curriculum: CurriculumConfig::default(),
            rewards: match profile {
                Profile::Crawler => RewardWeights::crawler(),
                Profile::QuadrupedDims => RewardWeights::default(),
            },
            robot: CrawlerConfig::for_profile(profile),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |key: &str, reason: &str| Err(TrainError::InvalidConfig { key: key.into(), reason: reason.into() });
        if self.robot.profile != self.profile {
            return bad("robot.profile", "must match profile");
        }
        if self.profile != Profile::Crawler {
            return bad("profile", "only the crawler profile can be simulated; quadruped-dims exposes dimensions only");
        }
        if self.envs == 0 {
            return bad("envs", "must be at least 1");
        }
        if self.ppo.minibatches > self.envs * self.ppo.horizon {
            return bad("ppo.minibatches", "more minibatches than samples");
        }
        if !(self.segment_length > 2.0 * self.robot.spawn_x) {
            return bad("segment_length", "tile too short for the spawn margin");
        }
        self.ppo.validate()?;
        self.curriculum.validate()?;
        self.robot.validate()?;
        Ok(())
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub steps: usize,
    /// Mean per-step reward terms, unscaled and unweighted except `weighted_total`.
    pub reward: RewardBreakdown,
    pub episodes: usize,
    pub successes: usize,
    pub mean_traversal: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub estimator: PplLoss,
    /// Per-component collision-state accuracy of the estimator at collection time.
    pub collision_accuracy: f64,
    pub mean_level: f64,
    pub level_histogram: Vec<usize>,
    /// Policy learning rate after this iteration's adaptation.
    pub lr: f64,
    pub action_std: f64,
}

/// Wall-clock split of one iteration, kept apart from the reproducible metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub iteration: usize,
    pub collection_s: f64,
    pub learning_s: f64,
    pub iteration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Optimizers {
    actor: AdamState<f32>,
    log_std: AdamState<f32>,
    critic: AdamState<f32>,
    ground: AdamState<f32>,
    space: AdamState<f32>,
    encoder: AdamState<f32>,
    decoder: AdamState<f32>,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    iteration: usize,
    rng: ChaCha8Rng,
    levels: Vec<u32>,
    envs: Vec<(EnvState, ChaCha8Rng)>,
    optim: Optimizers,
}

pub struct Trainer {
    cfg: TrainConfig,
    robot: Arc<CrawlerConfig>,
    agent: Agent,
    envs: Vec<CrawlerEnv>,
    obs: Vec<Observation>,
    levels: Vec<u32>,
    rng: ChaCha8Rng,
    optim: Optimizers,
    iteration: usize,
    pool: rayon::ThreadPool,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, TrainError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| TrainError::Pool(e.to_string()))
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let robot = Arc::new(cfg.robot.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX);
        let agent = Agent::new(&robot, &cfg.network, cfg.scales.clone(), cfg.ppo.init_log_std, &mut rng)?;
        let mut envs = Vec::with_capacity(cfg.envs);
        let mut obs = Vec::with_capacity(cfg.envs);
        for e in 0..cfg.envs {
            let mut env = CrawlerEnv::new(Arc::clone(&robot), cfg.rewards, cfg.segment_length, cfg.seed, e as u64)?;
            obs.push(rollout::start_episode(&mut env, &cfg.curriculum, cfg.curriculum.initial_level)?);
            envs.push(env);
        }
        let optim = Self::fresh_optimizers(&agent, &cfg.ppo);
        let levels = vec![cfg.curriculum.initial_level; cfg.envs];
        let pool = build_pool(cfg.workers)?;
        Ok(Trainer { cfg, robot, agent, envs, obs, levels, rng, optim, iteration: 0, pool })
    }

    fn fresh_optimizers(agent: &Agent, ppo: &PpoConfig) -> Optimizers {
        let policy = AdamConfig { lr: ppo.lr, ..AdamConfig::default() };
        let estimator = AdamConfig { lr: ppo.estimator_lr, ..AdamConfig::default() };
        Optimizers {
            actor: AdamState::new(agent.actor.n_params(), policy),
            log_std: AdamState::new(agent.log_std.len(), policy),
            critic: AdamState::new(agent.critic.n_params(), policy),
            ground: AdamState::new(agent.ppl.ground_encoder.n_params(), policy),
            space: AdamState::new(agent.ppl.space_encoder.n_params(), policy),
            encoder: AdamState::new(agent.ppl.proprio_encoder.n_params(), estimator),
            decoder: AdamState::new(agent.ppl.proprio_decoder.n_params(), estimator),
        }
    }

    /// Continues from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn resume(cfg: TrainConfig, checkpoint: &Path) -> Result<Self, TrainError> {
        cfg.validate()?;
        let robot = Arc::new(cfg.robot.clone());
        let bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
        let agent = Agent::from_checkpoint(&robot, cfg.scales.clone(), cfg.network.swap_scan_latents, decode_checkpoint(&bytes)?)?;
        let state_path = checkpoint.with_extension("state.json");
        let text = fs::read_to_string(&state_path).map_err(io_err(&state_path))?;
        let state: TrainerState = serde_json::from_str(&text)?;
        if state.envs.len() != cfg.envs {
            return Err(TrainError::CheckpointMismatch(format!("{} envs saved, config has {}", state.envs.len(), cfg.envs)));
        }
        let mut envs = Vec::with_capacity(cfg.envs);
        let mut obs = Vec::with_capacity(cfg.envs);
        for (env_state, env_rng) in state.envs {
            let env = CrawlerEnv::restore(Arc::clone(&robot), cfg.rewards, cfg.segment_length, env_state, env_rng)?;
            obs.push(env.observation());
            envs.push(env);
        }
        let pool = build_pool(cfg.workers)?;
        Ok(Trainer {
            cfg,
            robot,
            agent,
            envs,
            obs,
            levels: state.levels,
            rng: state.rng,
            optim: state.optim,
            iteration: state.iteration,
            pool,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn robot(&self) -> &CrawlerConfig {
        &self.robot
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Runs collection and learning once.
    pub fn run_iteration(&mut self) -> Result<(MetricsRow, TimingRow), TrainError> {
        let t0 = Instant::now();
        let batch = self.collect()?;
        let t1 = Instant::now();
        let mut row = self.update(&batch)?;
        let t2 = Instant::now();
        self.iteration += 1;
        row.iteration = self.iteration;
        let timing = TimingRow {
            iteration: self.iteration,
            collection_s: (t1 - t0).as_secs_f64(),
            learning_s: (t2 - t1).as_secs_f64(),
            iteration_s: (t2 - t0).as_secs_f64(),
        };
        Ok((row, timing))
    }

    /// PPO and estimator updates on one batch.
    fn update(&mut self, b: &RolloutBatch) -> Result<MetricsRow, TrainError> {
        let (n_envs, horizon, n) = (b.n_envs, b.horizon, b.len());
        let ppo = self.cfg.ppo.clone();

        // advantages per environment
        let mut adv = vec![0.0; n];
        let mut returns = vec![0.0; n];
        for e in 0..n_envs {
            let idx: Vec<usize> = (0..horizon).map(|t| t * n_envs + e).collect();
            let r: Vec<f64> = idx.iter().map(|&i| b.rewards[i]).collect();
            let v: Vec<f64> = idx.iter().map(|&i| b.values[i]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| b.dones[i]).collect();
            let (a, ret) = gae(&r, &v, &d, b.bootstrap[e], ppo.gamma, ppo.gae_lambda);
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                returns[i] = ret[k];
            }
        }
        normalize_advantages(&mut adv);

        let nj = self.agent.n_joints();
        let d = self.agent.dims;
        let (aw, lw, sw) = (d.actor_input(), self.agent.critic_low_dim(), crate::sensing::SCAN_LEN);
        let mb_size = n / ppo.minibatches;
        let (mut policy_loss, mut value_loss, mut kl, mut clip_frac, mut passes) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..ppo.epochs {
            order.shuffle(&mut self.rng);
            for mb in order.chunks_exact(mb_size) {
                let m = mb.len();
                let gather = |src: &[f32], w: usize| -> Vec<f32> { mb.iter().flat_map(|&i| src[i * w..(i + 1) * w].iter().copied()).collect() };
                let actor_in = gather(&b.actor_in, aw);
                let actions = gather(&b.actions, nj);

                // policy
                let cache = self.agent.actor.forward(&actor_in, m)?;
                let means = cache.output();
                let std: Vec<f64> = self.agent.log_std.iter().map(|&l| f64::from(l).exp()).collect();
                let mut d_mean = vec![0.0f32; m * nj];
                let mut d_log_std = vec![0.0f64; nj];
                let mut surrogate = 0.0;
                let mut mb_kl = 0.0;
                for (k, &i) in mb.iter().enumerate() {
                    let a = &actions[k * nj..(k + 1) * nj];
                    let mu = &means[k * nj..(k + 1) * nj];
                    let logp = gaussian_log_prob(a, mu, &self.agent.log_std);
                    let log_ratio = logp - b.logp[i];
                    let ratio = log_ratio.exp();
                    let (obj, d_obj_d_ratio) = clipped_surrogate(ratio, adv[i], ppo.clip);
                    surrogate += obj;
                    mb_kl += (ratio - 1.0) - log_ratio;
                    clip_frac += f64::from(u8::from((ratio - 1.0).abs() > ppo.clip));
                    // loss = −mean(obj); ∂ratio/∂logp = ratio
                    let d_logp = -d_obj_d_ratio * ratio / m as f64;
                    for j in 0..nj {
                        let z = (f64::from(a[j]) - f64::from(mu[j])) / std[j];
                        d_mean[k * nj + j] = (d_logp * z / std[j]) as f32;
                        d_log_std[j] += d_logp * (z * z - 1.0);
                    }
                }
                kl += mb_kl;
                self.set_policy_lr(adapt_lr(self.optim.actor.config.lr, mb_kl / m as f64, ppo.desired_kl));
                let mut g_actor = vec![0.0f32; self.agent.actor.n_params()];
                self.agent.actor.accumulate_grads(&cache, &d_mean, &mut g_actor)?;
                let mut g_log_std: Vec<f32> = d_log_std.iter().map(|&g| (g - ppo.entropy_coef) as f32).collect();
                policy_loss += -surrogate / m as f64;

                // value, through the scan encoders
                let low = gather(&b.critic_low, lw);
                let ground = gather(&b.ground, sw);
                let space = gather(&b.space, sw);
                let scans = self.agent.ppl.encode_scans(&ground, &space, m)?;
                let input = self.agent.critic_input(&low, &scans.zg, &scans.zs, m);
                let vcache = self.agent.critic.forward(&input, m)?;
                let mut dv = vec![0.0f32; m];
                let mut vloss = 0.0;
                for (k, &i) in mb.iter().enumerate() {
                    let err = f64::from(vcache.output()[k]) - returns[i];
                    vloss += err * err;
                    dv[k] = (2.0 * ppo.value_coef * err / m as f64) as f32;
                }
                value_loss += vloss / m as f64;
                let mut g_critic = vec![0.0f32; self.agent.critic.n_params()];
                let d_input = self.agent.critic.backward(&vcache, &dv, &mut g_critic)?;
                let (gl, gg, gs) = (lw, self.agent.ppl.dims.ground_latent, self.agent.ppl.dims.space_latent);
                let row_w = gl + gg + gs;
                let mut dzg = Vec::with_capacity(m * gg);
                let mut dzs = Vec::with_capacity(m * gs);
                for row in d_input.chunks_exact(row_w) {
                    dzg.extend_from_slice(&row[gl..gl + gg]);
                    dzs.extend_from_slice(&row[gl + gg..]);
                }
                let mut grads = self.agent.ppl.zero_grads();
                self.agent.ppl.scan_backward(&scans, &dzg, &dzs, &mut grads)?;

                let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
                if !(finite(&g_actor) && finite(&g_log_std) && finite(&g_critic) && finite(&grads.ground_encoder)) {
                    return Err(TrainError::NonFinite { iteration: self.iteration, what: "policy gradient".into() });
                }
                clip_group(&mut [&mut g_actor, &mut g_log_std], ppo.max_grad_norm);
                clip_group(&mut [&mut g_critic, &mut grads.ground_encoder, &mut grads.space_encoder], ppo.max_grad_norm);
                self.optim.actor.step(self.agent.actor.params_mut(), &g_actor);
                self.optim.log_std.step(&mut self.agent.log_std, &g_log_std);
                self.optim.critic.step(self.agent.critic.params_mut(), &g_critic);
                self.optim.ground.step(self.agent.ppl.ground_encoder.params_mut(), &grads.ground_encoder);
                self.optim.space.step(self.agent.ppl.space_encoder.params_mut(), &grads.space_encoder);
                passes += 1.0;
            }
        }

        // estimator, on the same batch
        let est_loss = self.update_estimator(b)?;

        let steps = n as f64;
        let correct = b.est_c.iter().zip(&b.target_c).filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5)).count();
        let mut histogram = vec![0usize; NUM_LEVELS as usize];
        for &l in &self.levels {
            histogram[l as usize] += 1;
        }
        let row = MetricsRow {
            iteration: self.iteration,
            steps: n,
            reward: b.stats.reward_sum.scaled(1.0 / steps),
            episodes: b.stats.episodes,
            successes: b.stats.successes,
            mean_traversal: if b.stats.episodes > 0 { b.stats.traversal_sum / b.stats.episodes as f64 } else { 0.0 },
            policy_loss: policy_loss / passes,
            value_loss: value_loss / passes,
            entropy: gaussian_entropy(&self.agent.log_std),
            approx_kl: kl / (passes * mb_size as f64),
            clip_fraction: clip_frac / (passes * mb_size as f64),
            estimator: est_loss,
            collision_accuracy: correct as f64 / b.target_c.len().max(1) as f64,
            mean_level: self.levels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.levels.len() as f64,
            level_histogram: histogram,
            lr: self.optim.actor.config.lr,
            action_std: self.agent.log_std.iter().map(|&l| f64::from(l).exp()).sum::<f64>() / nj as f64,
        };
        let values = [row.policy_loss, row.value_loss, row.estimator.total, row.reward.weighted_total];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite { iteration: self.iteration, what: "loss".into() });
        }
        Ok(row)
    }

    fn set_policy_lr(&mut self, lr: f64) {
        let o = &mut self.optim;
        for state in [&mut o.actor, &mut o.log_std, &mut o.critic, &mut o.ground, &mut o.space] {
            state.config.lr = lr;
        }
    }

    /// Supervised estimator step(s); `z^l` targets come from the scan
    /// encoders without gradient.
    pub fn update_estimator(&mut self, b: &RolloutBatch) -> Result<PplLoss, TrainError> {
        let n = b.len();
        let steps = self.cfg.ppo.estimator_steps.min(n);
        let chunk = n / steps;
        let d = self.agent.ppl.dims;
        let (hw, sw) = (d.history, crate::sensing::SCAN_LEN);
        let mut total = PplLoss::default();
        for s in 0..steps {
            let (lo, hi) = (s * chunk, (s + 1) * chunk);
            let m = hi - lo;
            let scans = self.agent.ppl.encode_scans(&b.ground[lo * sw..hi * sw], &b.space[lo * sw..hi * sw], m)?;
            let est = self.agent.ppl.estimate(&b.history[lo * hw..hi * hw], m)?;
            let targets = PplTargets {
                c: &b.target_c[lo * d.n_collision..hi * d.n_collision],
                v: &b.target_v[lo * d.velocity..hi * d.velocity],
                zl: &scans.zl,
                o_next: &b.target_o[lo * d.proprio..hi * d.proprio],
            };
            let (loss, grad) = ppl_loss(&est, &targets)?;
            let mut grads = self.agent.ppl.zero_grads();
            self.agent.ppl.estimator_backward(&est, &grad, &mut grads)?;
            if !grads.proprio_encoder.iter().chain(&grads.proprio_decoder).all(|g| g.is_finite()) {
                return Err(TrainError::NonFinite { iteration: self.iteration, what: "estimator gradient".into() });
            }
            clip_group(&mut [&mut grads.proprio_encoder, &mut grads.proprio_decoder], self.cfg.ppo.max_grad_norm);
            self.optim.encoder.step(self.agent.ppl.proprio_encoder.params_mut(), &grads.proprio_encoder);
            self.optim.decoder.step(self.agent.ppl.proprio_decoder.params_mut(), &grads.proprio_decoder);
            total.total += loss.total / steps as f64;
            total.collision += loss.collision / steps as f64;
            total.velocity += loss.velocity / steps as f64;
            total.latent += loss.latent / steps as f64;
            total.reconstruction += loss.reconstruction / steps as f64;
        }
        Ok(total)
    }

    /// Writes `<dir>/iter_NNNNNN.pplc` and its `.state.json` companion.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<PathBuf, TrainError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(format!("iter_{:06}.pplc", self.iteration));
        fs::write(&path, encode_checkpoint(&self.agent.to_checkpoint())).map_err(io_err(&path))?;
        let state = TrainerState {
            iteration: self.iteration,
            rng: self.rng.clone(),
            levels: self.levels.clone(),
            envs: self.envs.iter().map(|e| (e.state().clone(), e.rng().clone())).collect(),
            optim: self.optim.clone(),
        };
        let state_path = path.with_extension("state.json");
        fs::write(&state_path, serde_json::to_string(&state)?).map_err(io_err(&state_path))?;
        Ok(path)
    }
}

/// Clips a parameter group to a joint L2 norm.
fn clip_group(group: &mut [&mut Vec<f32>], max_norm: f64) {
    let norm = group.iter().flat_map(|g| g.iter()).map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        group.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x *= k);
    }
}

/// Where a training run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub metrics: PathBuf,
    pub timing: PathBuf,
    pub checkpoints: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        RunPaths {
            dir: dir.to_path_buf(),
            config: dir.join("config.json"),
            metrics: dir.join("metrics.jsonl"),
            timing: dir.join("timing.jsonl"),
            checkpoints: dir.join("checkpoints"),
        }
    }
}

/// Full training run with artifacts on disk, optionally continuing from a
/// checkpoint. Calls `on_row` after every iteration.
pub fn train(
    cfg: &TrainConfig,
    out: &Path,
    resume: Option<&Path>,
    mut on_row: impl FnMut(&MetricsRow, &TimingRow),
) -> Result<PathBuf, TrainError> {
    let paths = RunPaths::new(out);
    fs::create_dir_all(out).map_err(io_err(out))?;
    fs::write(&paths.config, serde_json::to_string_pretty(cfg)?).map_err(io_err(&paths.config))?;
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(cfg.clone(), ckpt)?,
        None => Trainer::new(cfg.clone())?,
    };
    let open = |path: &Path| {
        fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(resume.is_some())
            .truncate(resume.is_none())
            .open(path)
            .map_err(io_err(path))
    };
    let mut metrics = open(&paths.metrics)?;
    let mut timing = open(&paths.timing)?;
    while trainer.iteration() < cfg.iterations {
        let (row, t) = match trainer.run_iteration() {
            Ok(x) => x,
            Err(e) => {
                trainer.save_checkpoint(&paths.checkpoints)?;
                return Err(e);
            }
        };
        writeln!(metrics, "{}", serde_json::to_string(&row)?).map_err(io_err(&paths.metrics))?;
        writeln!(timing, "{}", serde_json::to_string(&t)?).map_err(io_err(&paths.timing))?;
        on_row(&row, &t);
        if cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0 && trainer.iteration() < cfg.iterations {
            trainer.save_checkpoint(&paths.checkpoints)?;
        }
    }
    trainer.save_checkpoint(&paths.checkpoints)
}
