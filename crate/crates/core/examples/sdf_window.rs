//! Generate a cluttered room and print the 3×3 distance window along a line.

use nalgebra::Vector3;
use quadswarm::dynamics::QuadParams;
use quadswarm::obs::sdf_window;
use quadswarm::world::{generate_world, EpisodeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> quadswarm::Result<()> {
    let config = EpisodeConfig {
        obstacle_density: 0.4,
        ..Default::default()
    };
    let world = generate_world(&config, &QuadParams::default(), &mut ChaCha8Rng::seed_from_u64(4))?;
    println!("{} obstacles", world.layout.obstacles.len());
    for o in &world.layout.obstacles {
        println!("  center ({:5.2}, {:5.2}) radius {:.2}", o.center[0], o.center[1], o.radius);
    }
    for i in 0..=8 {
        let p = Vector3::new(-4.0 + i as f64, 0.5, 2.0);
        let w = sdf_window(&world.layout, &p, 2.0);
        println!("x = {:5.1}:", p.x);
        for row in w.chunks(3).rev() {
            println!("    {:.3} {:.3} {:.3}", row[0], row[1], row[2]);
        }
    }
    Ok(())
}
