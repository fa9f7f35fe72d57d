//! Decentralized quadrotor swarm navigation: simulator, observations, rewards,
//! an attention actor-critic, IPPO training with collision replay, evaluation,
//! persistence and a fixed-memory inference runtime.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod evalkit;
pub mod micro;
pub mod obs;
pub mod policy;
pub mod reward;
pub mod trainer;
pub mod world;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
