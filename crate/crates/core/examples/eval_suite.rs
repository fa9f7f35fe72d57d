//! Scaling sweep of an untrained policy, including the 32-robot / 80% cell.
//!
//! ```text
//! cargo run --release --example eval_suite -- [suite [episodes]]
//! ```

use quadswarm::evalkit::{named_suite, results_csv, run_suite};
use quadswarm::policy::PolicyParams;
use quadswarm::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let suite = std::env::args().nth(1).unwrap_or_else(|| "stress".into());
    let episodes = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut config = RunConfig::default();
    config.world.episode_length = 500;
    let params = PolicyParams::init(&config.policy, &mut ChaCha8Rng::seed_from_u64(0))?;
    let results = run_suite(&params, &config, &named_suite(&suite)?, episodes, 0)?;
    print!("{}", results_csv(&results));
    Ok(())
}
