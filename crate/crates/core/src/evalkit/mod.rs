//! Evaluation: metrics, scenario drivers, scaling suites and value maps.

pub mod metrics;
pub mod runner;
pub mod scenarios;
pub mod suite;
pub mod vmap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{pooled_success_rate, score_episode, EpisodeReport, RobotReport, Trajectory, FINAL_WINDOW_TICKS};
pub use runner::{mean_final_distance, run_episode};
pub use scenarios::{pursuit_goal, swap_goals, Bezier, PursuitConfig, SwapConfig};
pub use suite::{named_suite, results_csv, run_suite, CellResult, Stat, SuiteCell, SUITE_NAMES};
pub use vmap::{v_value_map, ValueMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// A robot has reached its goal when it ends the episode this close to it, m.
    pub success_radius: f64,
    pub pursuit: PursuitConfig,
    pub swap: SwapConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            success_radius: 0.3,
            pursuit: PursuitConfig::default(),
            swap: SwapConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_radius > 0.0 && self.success_radius.is_finite()) {
            return Err(Error::config("eval.success_radius", "must be positive"));
        }
        self.pursuit.validate()?;
        self.swap.validate()
    }
}
