//! Two robots on a collision course: the crash is stored 150 ticks early and
//! the scheduler replays it at the configured rate until it is evicted.

use nalgebra::Vector3;
use quadswarm::dynamics::{hover_thrust, QuadParams, RobotState};
use quadswarm::trainer::{EpisodeStart, EpisodeTrace, ReplayBuffer, TrainConfig};
use quadswarm::world::{ObstacleLayout, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let p = QuadParams::default();
    let train = TrainConfig::default();
    let level = hover_thrust(&p) / p.max_thrust_per_rotor;

    let mut a = RobotState::at_rest(Vector3::new(-2.0, 0.0, 2.0));
    a.velocity.x = 1.0;
    let mut b = RobotState::at_rest(Vector3::new(2.0, 0.0, 2.0));
    b.velocity.x = -1.0;
    let mut world = WorldState::new(vec![a, b], vec![Vector3::zeros(); 2], ObstacleLayout::empty());

    let mut trace = EpisodeTrace::new();
    trace.push(&world);
    let mut buffer = ReplayBuffer::new(train.buffer_capacity);
    loop {
        let events = world.step(&[[level; 4]; 2], &p)?;
        trace.push(&world);
        if events.iter().any(|e| e.is_crash()) {
            buffer.record_collision(&trace, world.tick, 0);
            break;
        }
    }
    let stored = WorldState::restore(&buffer.entries().next().unwrap().state_bytes)?;
    println!(
        "crash at tick {}; stored tick {} with gap {:.3} m",
        world.tick,
        stored.tick,
        (stored.robots[0].position - stored.robots[1].position).norm()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for episode in 0..40 {
        buffer.evict_hard(train.max_replay_threshold);
        match buffer.maybe_replay(&mut rng, train.replay_rate) {
            EpisodeStart::Replay(e) => println!("episode {episode:2}: replay (count {})", e.replay_count),
            EpisodeStart::Fresh => println!("episode {episode:2}: fresh ({} stored)", buffer.len()),
        }
    }
    Ok(())
}
