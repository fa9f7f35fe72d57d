//! Critic values over a horizontal slice of a cluttered room, as an ASCII heat map.

use quadswarm::evalkit::v_value_map;
use quadswarm::policy::PolicyParams;
use quadswarm::world::generate_world;
use quadswarm::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let config = RunConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = PolicyParams::init(&config.policy, &mut rng)?;
    let world = generate_world(&config.world, &config.quad, &mut rng)?;
    let map = v_value_map(&params, &world, &config.obs, 0, 2.0, [10.0, 10.0], 0.25)?;

    let (lo, hi) = map.values.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let shades = b" .:-=+*#%@";
    for iy in (0..map.ny).rev() {
        let row: String = (0..map.nx)
            .map(|ix| {
                let t = (map.get(ix, iy) - lo) / (hi - lo).max(1e-12);
                shades[(t * (shades.len() - 1) as f64).round() as usize] as char
            })
            .collect();
        println!("{row}");
    }
    println!("{}x{} cells, values in [{lo:.4}, {hi:.4}]", map.nx, map.ny);
    Ok(())
}
