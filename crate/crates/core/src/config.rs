//! The run configuration: one TOML file with a section per module.
//!
//! ```toml
//! [world]
//! n_robots = 8
//! obstacle_density = 0.2
//!
//! [train.ppo]
//! learning_rate = 3e-4
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::QuadParams;
use crate::error::{Error, Result};
use crate::evalkit::EvalConfig;
use crate::obs::ObsConfig;
use crate::policy::PolicyConfig;
use crate::reward::RewardWeights;
use crate::trainer::TrainConfig;
use crate::world::{EpisodeConfig, PointToPoint};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub quad: QuadParams,
    pub world: EpisodeConfig,
    pub obs: ObsConfig,
    pub reward: RewardWeights,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Desk-scale preset: one robot, no obstacles, a fixed goal 2 m from the
    /// start and a small network, sized for a 2M-step run on one CPU core.
    pub fn smoke() -> Self {
        let mut c = RunConfig::default();
        c.world.n_robots = 1;
        c.world.obstacle_density = 0.0;
        c.world.episode_length = 800;
        c.world.point_to_point = Some(PointToPoint {
            start: [0.0, 0.0, 2.0],
            goal: [2.0, 0.0, 2.0],
        });
        c.obs.k_neighbors = 0;
        c.policy = PolicyConfig {
            hidden_dim: 16,
            n_heads: 2,
            ..PolicyConfig::default()
        };
        c.train.total_env_steps = 2_000_000;
        c.train.n_parallel_envs = 8;
        c.train.horizon = 256;
        c.train.ppo.minibatch_size = 256;
        c.train.ppo.epochs = 10;
        c.train.ppo.learning_rate = 3e-4;
        c
    }

    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Every value, defaults included, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        self.world.validate()?;
        self.reward.validate(self.quad.radius)?;
        self.policy.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if !(self.obs.d_max_sense > 0.0 && self.obs.d_max_sense.is_finite()) {
            return Err(Error::config("obs.d_max_sense", "must be positive"));
        }
        if self.obs.k_neighbors + 1 > self.world.n_robots {
            return Err(Error::config(
                "obs.k_neighbors",
                format!(
                    "K = {} exceeds N - 1 = {}",
                    self.obs.k_neighbors,
                    self.world.n_robots - 1
                ),
            ));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}
