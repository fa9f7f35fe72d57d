//! Desk-scale training run: one robot learns to fly to a goal 2 m away.
//!
//! ```text
//! cargo run --release --example train_smoke -- [config.toml [checkpoint.bin]]
//! ```

use std::time::Instant;

use quadswarm::evalkit::mean_final_distance;
use quadswarm::trainer::Trainer;
use quadswarm::RunConfig;

const EVAL_SEED: u64 = 10_000;

fn main() -> quadswarm::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => quadswarm::load_config(path)?,
        None => RunConfig::smoke(),
    };
    let mut trainer = Trainer::new(config.clone())?;
    let before = mean_final_distance(trainer.params(), &config, 10, EVAL_SEED)?;
    println!("untrained final-second distance: {before:.3} m");

    let start = Instant::now();
    while !trainer.is_done() {
        let m = trainer.train_update()?;
        if m.update % 50 == 0 {
            let d = mean_final_distance(trainer.params(), &config, 3, EVAL_SEED)?;
            println!(
                "update {:4} steps {:8} reward {:8.4} dist {:6.3} kl {:.4} ev {:.3} [{:.0}s]",
                m.update,
                m.env_steps,
                m.mean_reward,
                d,
                m.ppo.approx_kl,
                m.ppo.explained_variance,
                start.elapsed().as_secs_f64()
            );
        }
    }
    let after = mean_final_distance(trainer.params(), &config, 10, EVAL_SEED)?;
    println!(
        "trained final-second distance: {after:.3} m ({:.1}% of untrained) in {:.0}s",
        100.0 * after / before,
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = std::env::args().nth(2) {
        quadswarm::checkpoint::save_checkpoint(&path, &trainer.state())?;
        println!("saved {path}");
    }
    Ok(())
}
