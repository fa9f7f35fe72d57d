use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{score_episode, Trajectory};
use super::scenarios::{pursuit_goal, swap_goals};
use crate::config::RunConfig;
use crate::error::Result;
use crate::obs::observe_all;
use crate::policy::{sigmoid, PolicyParams};
use crate::world::{generate_world, GoalMode};

/// Roll out the deterministic policy (squashed action means) for one episode.
///
/// Pursuit episodes move the shared goal along a random curve starting at the
/// generated goal; swap episodes permute goals once at a random time.
pub fn run_episode(params: &PolicyParams, config: &RunConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = generate_world(&config.world, &config.quad, &mut rng)?;
    let n = world.n_robots();
    let dt = config.quad.dt;
    let length = config.world.episode_length as usize;

    let curve = (config.world.goal_mode == GoalMode::Pursuit).then(|| config.eval.pursuit.sample_curve(world.goals[0], &mut rng));
    let swap_tick = (config.world.goal_mode == GoalMode::Swap).then(|| (config.eval.swap.sample_trigger(&mut rng) / dt).round() as u32);

    let mut traj = Trajectory {
        positions: Vec::with_capacity(length + 1),
        goals: Vec::with_capacity(length + 1),
        collisions: Vec::with_capacity(length),
        ..Default::default()
    };
    traj.positions.push(world.robots.iter().map(|r| r.position).collect());
    traj.goals.push(world.goals.clone());

    let mut ws = params.workspace(config.obs.k_neighbors);
    let mut actions = vec![[0.0; 4]; n];
    for _ in 0..length {
        let clock = Instant::now();
        let obs = observe_all(&world, &config.obs)?;
        for (a, o) in actions.iter_mut().zip(&obs) {
            *a = params.forward_actor(o, &mut ws)?.map(sigmoid);
        }
        traj.inference_seconds += clock.elapsed().as_secs_f64();
        traj.decisions += n as u64;

        let events = world.step(&actions, &config.quad)?;
        if let Some(c) = &curve {
            let g = pursuit_goal(world.tick as f64 * dt, c, config.eval.pursuit.duration);
            world.goals.iter_mut().for_each(|x| *x = g);
        }
        if swap_tick == Some(world.tick) {
            swap_goals(&mut world, &mut rng);
        }
        traj.collisions.push(events.iter().map(|e| e.any()).collect());
        traj.positions.push(world.robots.iter().map(|r| r.position).collect());
        traj.goals.push(world.goals.clone());
    }
    Ok(traj)
}

/// Mean final-second distance to goal over `episodes` evaluation episodes
/// seeded `seed, seed + 1, ...`.
pub fn mean_final_distance(params: &PolicyParams, config: &RunConfig, episodes: u64, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..episodes {
        let traj = run_episode(params, config, seed + e)?;
        total += score_episode(&traj, config.eval.success_radius).mean_final_distance;
    }
    Ok(total / episodes.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    fn small(mode: GoalMode) -> RunConfig {
        let mut c = RunConfig::default();
        c.world.n_robots = 4;
        c.world.episode_length = 700;
        c.world.goal_mode = mode;
        c.policy = PolicyConfig::deployment();
        c
    }

    #[test]
    fn deterministic_and_sized() {
        let c = small(GoalMode::SameGoal);
        let p = PolicyParams::init(&c.policy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let a = run_episode(&p, &c, 3).unwrap();
        let b = run_episode(&p, &c, 3).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.n_ticks(), 701);
        assert_eq!(a.collisions.len(), 700);
        assert_eq!(a.decisions, 2800);
    }

    #[test]
    fn swap_changes_goals_once() {
        let mut c = small(GoalMode::Swap);
        c.world.episode_length = 900;
        let p = PolicyParams::init(&c.policy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let t = run_episode(&p, &c, 4).unwrap();
        let changes = t.goals.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
        let at = t.goals.windows(2).position(|w| w[0] != w[1]).unwrap() + 1;
        assert!((400..=800).contains(&at));
    }

    #[test]
    fn pursuit_goal_is_shared_and_moves() {
        let c = small(GoalMode::Pursuit);
        let p = PolicyParams::init(&c.policy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let t = run_episode(&p, &c, 5).unwrap();
        assert!(t.goals.iter().all(|g| g.iter().all(|x| *x == g[0])));
        assert_ne!(t.goals[0][0], t.goals[700][0]);
    }
}
