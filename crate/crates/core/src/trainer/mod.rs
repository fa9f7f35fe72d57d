//! Independent PPO over parallel environments with collision replay.
//!
//! Every robot is its own PPO agent acting on its own observation; all agents
//! share one parameter set. Rollouts are collected synchronously across
//! environments against a fixed parameter snapshot, then a single learner
//! updates the parameters.

pub mod adam;
pub mod distill;
pub mod env;
pub mod gae;
pub mod normalize;
pub mod ppo;
pub mod replay;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::obs::RobotObservation;
use crate::policy::{sample_action, sigmoid, PolicyParams, ACTION_DIM};
use crate::world::WorldState;

pub use adam::Adam;
pub use env::{EpisodeSummary, SwarmEnv};
pub use gae::compute_gae;
pub use normalize::RunningNorm;
pub use ppo::{ppo_update, Batch, PpoConfig, PpoDiagnostics};
pub use replay::{EpisodeStart, EpisodeTrace, ReplayBuffer, ReplayEntry, REWIND_TICKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Probability that a new episode starts from a stored pre-collision state.
    pub replay_rate: f64,
    /// Entries replayed more than this many times are dropped.
    pub max_replay_threshold: u32,
    pub buffer_capacity: usize,
    pub ppo: PpoConfig,
    pub total_env_steps: u64,
    pub n_parallel_envs: usize,
    /// Steps per environment per rollout.
    pub horizon: usize,
    pub seed: u64,
    /// Write a checkpoint every this many updates (0 disables periodic checkpoints).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            replay_rate: 0.3,
            max_replay_threshold: 3,
            buffer_capacity: 512,
            ppo: PpoConfig::default(),
            total_env_steps: 10_000_000,
            n_parallel_envs: 8,
            horizon: 256,
            seed: 0,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replay_rate) {
            return Err(Error::config("train.replay_rate", "must lie in [0, 1]"));
        }
        if self.n_parallel_envs == 0 {
            return Err(Error::config("train.n_parallel_envs", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("train.horizon", "must be at least 1"));
        }
        self.ppo.validate()
    }
}

/// Transitions of one rollout, indexed `step * n_agents + agent`.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub n_agents: usize,
    pub horizon: usize,
    pub obs: Vec<RobotObservation>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of each agent's state after the last step.
    pub bootstrap: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Per-agent advantage estimation, flattened into a training batch.
    pub fn into_batch(self, gamma: f64, lambda: f64) -> Batch {
        let (a, t) = (self.n_agents, self.horizon);
        let mut advantages = vec![0.0; a * t];
        let mut returns = vec![0.0; a * t];
        let mut r = vec![0.0; t];
        let mut v = vec![0.0; t];
        let mut d = vec![false; t];
        for agent in 0..a {
            for step in 0..t {
                let i = step * a + agent;
                r[step] = self.rewards[i];
                v[step] = self.values[i];
                d[step] = self.dones[i];
            }
            let (adv, ret) = compute_gae(&r, &v, &d, self.bootstrap[agent], gamma, lambda);
            for step in 0..t {
                advantages[step * a + agent] = adv[step];
                returns[step * a + agent] = ret[step];
            }
        }
        Batch {
            obs: self.obs,
            actions: self.actions,
            log_probs: self.log_probs,
            advantages,
            returns,
            values: self.values,
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: u64,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub episodes: usize,
    /// Mean fraction of robots at their goal without a collision, over finished episodes.
    pub success_proxy: Option<f64>,
    pub collision_rate: Option<f64>,
    pub replay_buffer: usize,
    pub replayed_episodes: usize,
    #[serde(flatten)]
    pub ppo: PpoDiagnostics,
}

/// Full learner state; everything needed to resume bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub config: RunConfig,
    pub params: Vec<f64>,
    pub optimizer: Adam,
    pub envs: Vec<SwarmEnv>,
    pub buffer: ReplayBuffer,
    pub value_norm: RunningNorm,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub updates: u64,
    pub next_episode_id: u64,
}

pub struct Trainer {
    config: RunConfig,
    params: PolicyParams,
    optimizer: Adam,
    envs: Vec<SwarmEnv>,
    buffer: ReplayBuffer,
    value_norm: RunningNorm,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    next_episode_id: u64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.train.seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = PolicyParams::init(&config.policy, &mut rng)?;
        let envs = (0..config.train.n_parallel_envs)
            .map(|i| SwarmEnv::new(&config, seed, i as u64 + 1, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let optimizer = Adam::new(params.len(), config.train.ppo.learning_rate);
        Ok(Trainer {
            next_episode_id: envs.len() as u64,
            buffer: ReplayBuffer::new(config.train.buffer_capacity),
            value_norm: RunningNorm::default(),
            config,
            params,
            optimizer,
            envs,
            rng,
            env_steps: 0,
            updates: 0,
        })
    }

    pub fn from_state(state: TrainerState) -> Result<Self> {
        state.config.validate()?;
        let params = PolicyParams::from_vec(&state.config.policy, state.params)?;
        Ok(Trainer {
            config: state.config,
            params,
            optimizer: state.optimizer,
            envs: state.envs,
            buffer: state.buffer,
            value_norm: state.value_norm,
            rng: state.rng,
            env_steps: state.env_steps,
            updates: state.updates,
            next_episode_id: state.next_episode_id,
        })
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            config: self.config.clone(),
            params: self.params.as_slice().to_vec(),
            optimizer: self.optimizer.clone(),
            envs: self.envs.clone(),
            buffer: self.buffer.clone(),
            value_norm: self.value_norm.clone(),
            rng: self.rng.clone(),
            env_steps: self.env_steps,
            updates: self.updates,
            next_episode_id: self.next_episode_id,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn value_norm(&self) -> &RunningNorm {
        &self.value_norm
    }

    pub fn replay_buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_done(&self) -> bool {
        self.env_steps >= self.config.train.total_env_steps
    }

    /// Pick the next episode for env `i`: a replayed snapshot or a fresh world.
    fn restart_env(&mut self, i: usize) -> Result<()> {
        let train = &self.config.train;
        self.buffer.evict_hard(train.max_replay_threshold);
        let id = self.next_episode_id;
        self.next_episode_id += 1;
        match self.buffer.maybe_replay(&mut self.rng, train.replay_rate) {
            EpisodeStart::Replay(entry) => {
                let world = WorldState::restore(&entry.state_bytes)?;
                self.envs[i].start(world, id, true);
            }
            EpisodeStart::Fresh => {
                let world = self.envs[i].fresh_world(&self.config)?;
                self.envs[i].start(world, id, false);
            }
        }
        Ok(())
    }

    /// Run every environment for `horizon` steps under the current parameters.
    pub fn collect_rollout(&mut self) -> Result<(Rollout, Vec<EpisodeSummary>)> {
        let horizon = self.config.train.horizon;
        let n_robots = self.envs[0].world.n_robots();
        let n_agents = self.envs.len() * n_robots;
        let mut out = Rollout {
            n_agents,
            horizon,
            ..Default::default()
        };
        let cap = n_agents * horizon;
        out.obs.reserve(cap);
        out.actions.reserve(cap);
        out.log_probs.reserve(cap);
        out.rewards.reserve(cap);
        out.values.reserve(cap);
        out.dones.reserve(cap);

        let mut summaries = Vec::new();
        let mut ws = self.params.workspace(self.config.obs.k_neighbors);
        let mut current: Vec<Vec<RobotObservation>> =
            self.envs.iter().map(|e| e.observe(&self.config)).collect::<Result<_>>()?;
        let success_radius = self.config.eval.success_radius;

        for _ in 0..horizon {
            for e in 0..self.envs.len() {
                let mut actions = Vec::with_capacity(n_robots);
                for obs in &current[e] {
                    if !obs.is_finite() {
                        return Err(Error::NonFinite("observation"));
                    }
                    let o = self.params.forward_with(obs, &mut ws)?;
                    let (sample, lp) = sample_action(&o.action_mean_pre, &o.action_log_std, &mut self.envs[e].rng);
                    actions.push(sample.map(sigmoid));
                    out.actions.push(sample);
                    out.log_probs.push(lp);
                    out.values.push(self.value_norm.denormalize(o.value));
                }
                let step = self.envs[e].step(&actions, &self.config)?;
                if step.rewards.iter().any(|r| !r.is_finite()) {
                    return Err(Error::NonFinite("reward"));
                }
                if step.events.iter().any(|ev| ev.is_crash()) {
                    let env = &self.envs[e];
                    self.buffer.record_collision(&env.trace, env.world.tick, env.episode_id);
                }
                out.rewards.extend_from_slice(&step.rewards);
                out.dones.extend(std::iter::repeat(step.done).take(n_robots));
                let prev = std::mem::replace(&mut current[e], step.obs);
                out.obs.extend(prev);
                if step.done {
                    summaries.push(self.envs[e].summary(success_radius));
                    self.restart_env(e)?;
                    current[e] = self.envs[e].observe(&self.config)?;
                }
            }
            self.env_steps += self.envs.len() as u64;
        }

        for obs in current.iter().flatten() {
            let v = self.params.forward_critic(obs, &mut ws)?;
            out.bootstrap.push(self.value_norm.denormalize(v));
        }
        Ok((out, summaries))
    }

    /// One rollout followed by one PPO update.
    pub fn train_update(&mut self) -> Result<UpdateMetrics> {
        let progress = self.env_steps as f64 / self.config.train.total_env_steps.max(1) as f64;
        let (rollout, summaries) = self.collect_rollout()?;
        let mean_reward = rollout.rewards.iter().sum::<f64>() / rollout.rewards.len().max(1) as f64;
        let mut ppo_cfg = self.config.train.ppo.clone();
        if ppo_cfg.lr_anneal {
            ppo_cfg.learning_rate *= (1.0 - progress).max(0.0);
        }
        let mut batch = rollout.into_batch(ppo_cfg.gamma, ppo_cfg.gae_lambda);
        // The critic regresses standardized returns; values stay in reward units for GAE.
        self.value_norm.update(&batch.returns);
        let norm = &self.value_norm;
        batch.returns.iter_mut().for_each(|r| *r = norm.normalize(*r));
        batch.values.iter_mut().for_each(|v| *v = norm.normalize(*v));
        let diag = ppo_update(&mut self.params, &mut self.optimizer, &batch, &ppo_cfg, &mut self.rng)?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite("policy parameters"));
        }
        self.updates += 1;

        let episodes = summaries.len();
        let mean_of = |f: fn(&EpisodeSummary) -> f64| {
            (episodes > 0).then(|| summaries.iter().map(f).sum::<f64>() / episodes as f64)
        };
        Ok(UpdateMetrics {
            update: self.updates,
            env_steps: self.env_steps,
            mean_reward,
            episodes,
            success_proxy: mean_of(|s| s.success_fraction),
            collision_rate: mean_of(|s| s.collision_fraction),
            replay_buffer: self.buffer.len(),
            replayed_episodes: summaries.iter().filter(|s| s.replayed).count(),
            ppo: diag,
        })
    }

    /// Train until the step budget is spent, appending one JSON line per update to `log`.
    /// `on_update` runs after each update (checkpointing hooks in here).
    pub fn run<W: Write>(
        &mut self,
        log: &mut W,
        mut on_update: impl FnMut(&Trainer, &UpdateMetrics) -> Result<()>,
    ) -> Result<()> {
        while !self.is_done() {
            let m = self.train_update()?;
            let line = serde_json::to_string(&m).expect("metrics serialize");
            writeln!(log, "{line}").and_then(|_| log.flush()).map_err(|e| Error::io("metrics log", e))?;
            on_update(self, &m)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;
    use crate::world::EpisodeConfig;

    fn tiny_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.world = EpisodeConfig {
            n_robots: 3,
            obstacle_density: 0.2,
            episode_length: 40,
            ..Default::default()
        };
        c.policy = PolicyConfig {
            hidden_dim: 8,
            n_heads: 2,
            ..Default::default()
        };
        c.train.n_parallel_envs = 2;
        c.train.horizon = 50;
        c.train.ppo.minibatch_size = 64;
        c.train.ppo.epochs = 2;
        c.train.total_env_steps = 300;
        c
    }

    #[test]
    fn rollout_counts_transitions_and_marks_boundaries() {
        let mut t = Trainer::new(tiny_config()).unwrap();
        let (r, summaries) = t.collect_rollout().unwrap();
        assert_eq!(r.len(), 50 * 2 * 3);
        assert_eq!(r.bootstrap.len(), 6);
        // Episodes of 40 ticks: the done flag is set on step index 39 only.
        for step in 0..50 {
            let expect = step == 39;
            assert!(r.dones[step * 6..(step + 1) * 6].iter().all(|d| *d == expect));
        }
        assert_eq!(summaries.len(), 2);
    }

    #[test]
    fn identical_seeds_identical_batches() {
        let (a, _) = Trainer::new(tiny_config()).unwrap().collect_rollout().unwrap();
        let (b, _) = Trainer::new(tiny_config()).unwrap().collect_rollout().unwrap();
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.obs, b.obs);
    }

    #[test]
    fn training_loop_runs_and_logs() {
        let mut t = Trainer::new(tiny_config()).unwrap();
        let mut log = Vec::new();
        let mut seen = 0;
        t.run(&mut log, |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 3);
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            let m: UpdateMetrics = serde_json::from_str(line).unwrap();
            assert!(m.mean_reward.is_finite());
        }
    }

    #[test]
    fn state_round_trip_resumes() {
        let mut a = Trainer::new(tiny_config()).unwrap();
        a.train_update().unwrap();
        let mut b = Trainer::from_state(a.state()).unwrap();
        let ma = a.train_update().unwrap();
        let mb = b.train_update().unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a.params().as_slice(), b.params().as_slice());
    }

    #[test]
    fn annealing_starts_at_full_rate() {
        let mut c = tiny_config();
        let mut a = Trainer::new(c.clone()).unwrap();
        c.train.ppo.lr_anneal = true;
        let mut b = Trainer::new(c).unwrap();
        a.train_update().unwrap();
        b.train_update().unwrap();
        assert_eq!(a.params().as_slice(), b.params().as_slice());
        a.train_update().unwrap();
        b.train_update().unwrap();
        assert_ne!(a.params().as_slice(), b.params().as_slice());
    }
}
