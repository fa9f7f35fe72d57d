//! Export a deployment-size actor, reload it and compare against the original.

use quadswarm::micro::{export_micro, micro_forward, MicroModel, MicroWorkspace};
use quadswarm::obs::RobotObservation;
use quadswarm::policy::{PolicyConfig, PolicyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let config = PolicyConfig::deployment();
    let params = PolicyParams::init(&config, &mut rng)?;
    let bytes = export_micro(&params)?;
    let model = MicroModel::from_bytes(&bytes)?;
    let mut ws = MicroWorkspace::new(&model);
    println!(
        "{} bytes for {} parameters; workspace {} bytes",
        bytes.len(),
        config.inference_param_count(),
        ws.footprint_bytes()
    );

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let obs = RobotObservation {
            self_obs: std::array::from_fn(|_| rng.gen_range(-2.0..2.0)),
            neighbor_obs: vec![std::array::from_fn(|_| rng.gen_range(-2.0..2.0)); 2],
            obstacle_obs: std::array::from_fn(|_| rng.gen_range(0.0..2.0)),
        };
        let a = micro_forward(&model, &obs, &mut ws)?;
        let b = params.forward(&obs)?.action_mean;
        for k in 0..4 {
            worst = worst.max((a[k] - b[k]).abs());
        }
    }
    println!("max |micro - f64 policy| over 1000 observations: {worst:.2e}");
    Ok(())
}
