//! Goal-pursuit and goal-swap scenarios with an untrained policy.

use quadswarm::evalkit::{run_episode, score_episode};
use quadswarm::policy::PolicyParams;
use quadswarm::world::GoalMode;
use quadswarm::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let mut config = RunConfig::default();
    config.world.obstacle_density = 0.0;
    let params = PolicyParams::init(&config.policy, &mut ChaCha8Rng::seed_from_u64(1))?;

    for mode in [GoalMode::Pursuit, GoalMode::Swap] {
        config.world.goal_mode = mode;
        let traj = run_episode(&params, &config, 3)?;
        let moves = traj.goals.windows(2).filter(|w| w[0] != w[1]).count();
        let first = &traj.goals[0][0];
        let last = traj.goals.last().unwrap()[0];
        let report = score_episode(&traj, config.eval.success_radius);
        println!(
            "{mode:?}: goal of robot 0 changed on {moves} ticks, {:.2?} -> {:.2?}; final distance {:.2} m",
            first.as_slice(),
            last.as_slice(),
            report.mean_final_distance
        );
    }
    Ok(())
}
