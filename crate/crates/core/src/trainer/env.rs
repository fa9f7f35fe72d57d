//! One training environment: a world, its RNG and the bookkeeping needed by the
//! replay curriculum and the per-episode success proxy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::replay::EpisodeTrace;
use crate::config::RunConfig;
use crate::dynamics;
use crate::error::Result;
use crate::obs::{observe_all, RobotObservation};
use crate::reward::{total_reward, RewardInputs};
use crate::world::{generate_world, CollisionEvents, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmEnv {
    pub world: WorldState,
    pub rng: ChaCha8Rng,
    pub trace: EpisodeTrace,
    pub episode_id: u64,
    pub replayed: bool,
    /// Any collision so far this episode, per robot.
    pub collided: Vec<bool>,
}

/// Outcome of one finished episode, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub success_fraction: f64,
    pub collision_fraction: f64,
    pub replayed: bool,
}

pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub events: Vec<CollisionEvents>,
    pub obs: Vec<RobotObservation>,
    pub done: bool,
}

impl SwarmEnv {
    pub fn new(config: &RunConfig, seed: u64, stream: u64, episode_id: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let world = generate_world(&config.world, &config.quad, &mut rng)?;
        let mut env = SwarmEnv {
            collided: vec![false; world.n_robots()],
            world,
            rng,
            trace: EpisodeTrace::new(),
            episode_id,
            replayed: false,
        };
        env.trace.push(&env.world);
        Ok(env)
    }

    pub fn observe(&self, config: &RunConfig) -> Result<Vec<RobotObservation>> {
        observe_all(&self.world, &config.obs)
    }

    /// Begin a new episode from `world` (fresh or restored).
    pub fn start(&mut self, world: WorldState, episode_id: u64, replayed: bool) {
        self.collided = vec![false; world.n_robots()];
        self.world = world;
        self.episode_id = episode_id;
        self.replayed = replayed;
        self.trace.clear();
        self.trace.push(&self.world);
    }

    pub fn fresh_world(&mut self, config: &RunConfig) -> Result<WorldState> {
        generate_world(&config.world, &config.quad, &mut self.rng)
    }

    /// Apply thrust levels in `[0, 1]` for every robot.
    pub fn step(&mut self, actions: &[[f64; 4]], config: &RunConfig) -> Result<StepOutcome> {
        let events = self.world.step(actions, &config.quad)?;
        self.trace.push(&self.world);
        let obs = observe_all(&self.world, &config.obs)?;
        let mut rewards = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            let thrusts = dynamics::action_to_thrusts(&actions[i], &config.quad)?;
            let inputs = RewardInputs {
                goal_offset: [o.self_obs[0], o.self_obs[1], o.self_obs[2]],
                neighbor_obs: &o.neighbor_obs,
                state: &self.world.robots[i],
                thrusts,
                events: events[i],
            };
            rewards.push(total_reward(&inputs, &config.reward));
            self.collided[i] |= events[i].any();
        }
        let done = self.world.tick >= config.world.episode_length;
        Ok(StepOutcome {
            rewards,
            events,
            obs,
            done,
        })
    }

    pub fn summary(&self, success_radius: f64) -> EpisodeSummary {
        let n = self.world.n_robots() as f64;
        let mut success = 0usize;
        for (i, r) in self.world.robots.iter().enumerate() {
            let reached = (r.position - self.world.goals[i]).norm() <= success_radius;
            if reached && !self.collided[i] {
                success += 1;
            }
        }
        EpisodeSummary {
            success_fraction: success as f64 / n,
            collision_fraction: self.collided.iter().filter(|c| **c).count() as f64 / n,
            replayed: self.replayed,
        }
    }
}
