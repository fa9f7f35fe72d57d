//! Load a config, train two updates, checkpoint, resume and confirm the
//! resumed run matches an uninterrupted one.

use quadswarm::checkpoint::{decode_checkpoint, encode_checkpoint};
use quadswarm::trainer::Trainer;
use quadswarm::RunConfig;

const CONFIG: &str = "
[world]
n_robots = 4
episode_length = 100

[policy]
hidden_dim = 8
n_heads = 2

[train]
n_parallel_envs = 2
horizon = 64
seed = 42

[train.ppo]
minibatch_size = 128
";

fn main() -> quadswarm::Result<()> {
    let config = RunConfig::from_toml(CONFIG)?;
    println!("resolved config:\n{}", config.to_toml());

    let mut a = Trainer::new(config.clone())?;
    for _ in 0..2 {
        a.train_update()?;
    }
    let bytes = encode_checkpoint(&a.state());
    println!("checkpoint after 2 updates: {} bytes", bytes.len());

    let mut b = Trainer::from_state(decode_checkpoint(&bytes)?)?;
    for _ in 0..2 {
        let ma = a.train_update()?;
        let mb = b.train_update()?;
        println!("update {}: reward {:.6} vs {:.6}", ma.update, ma.mean_reward, mb.mean_reward);
    }
    println!("parameters identical: {}", a.params().as_slice() == b.params().as_slice());
    Ok(())
}
