use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::obs::{observe, ObsConfig};
use crate::policy::PolicyParams;
use crate::world::WorldState;

/// Critic values on a horizontal slice, row-major with rows along +y.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMap {
    pub robot: usize,
    pub z: f64,
    pub resolution: f64,
    /// Coordinates of the first sample (column 0, row 0).
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl ValueMap {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.x0 + ix as f64 * self.resolution, self.y0 + iy as f64 * self.resolution)
    }

    /// Comma-separated grid preceded by `#` metadata lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "# robot={} z={} resolution={} x0={} y0={} nx={} ny={}",
            self.robot, self.z, self.resolution, self.x0, self.y0, self.nx, self.ny
        )
        .unwrap();
        writeln!(s, "# rows: y ascending from y0; columns: x ascending from x0").unwrap();
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Sweep robot `robot` over a `extent[0] × extent[1]` slice centered on the
/// room at height `z` with every velocity zeroed, evaluating its critic at
/// each cell center. Each axis has `⌈extent / resolution⌉` samples.
pub fn v_value_map(
    params: &PolicyParams,
    world: &WorldState,
    obs_config: &ObsConfig,
    robot: usize,
    z: f64,
    extent: [f64; 2],
    resolution: f64,
) -> Result<ValueMap> {
    if robot >= world.n_robots() {
        return Err(Error::config("robot", format!("index {robot} out of range for {} robots", world.n_robots())));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::config("resolution", "must be positive"));
    }
    if !(extent[0] > 0.0 && extent[1] > 0.0) {
        return Err(Error::config("extent", "must be positive"));
    }
    let nx = (extent[0] / resolution).ceil() as usize;
    let ny = (extent[1] / resolution).ceil() as usize;
    let x0 = -extent[0] / 2.0 + resolution / 2.0;
    let y0 = -extent[1] / 2.0 + resolution / 2.0;

    let mut w = world.clone();
    for r in &mut w.robots {
        r.velocity = Vector3::zeros();
        r.angular_velocity = Vector3::zeros();
    }
    let mut ws = params.workspace(obs_config.k_neighbors);
    let mut values = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            w.robots[robot].position = Vector3::new(x0 + ix as f64 * resolution, y0 + iy as f64 * resolution, z);
            let o = observe(&w, robot, obs_config)?;
            values.push(params.forward_critic(&o, &mut ws)?);
        }
    }
    Ok(ValueMap {
        robot,
        z,
        resolution,
        x0,
        y0,
        nx,
        ny,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadParams;
    use crate::policy::PolicyConfig;
    use crate::world::{generate_world, EpisodeConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> WorldState {
        generate_world(&EpisodeConfig::default(), &QuadParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn grid_dimensions() {
        let p = PolicyParams::init(&PolicyConfig::deployment(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let m = v_value_map(&p, &world(), &ObsConfig::default(), 0, 2.0, [10.0, 10.0], 0.3).unwrap();
        assert_eq!((m.nx, m.ny), (34, 34));
        assert_eq!(m.values.len(), 34 * 34);
        let csv = m.to_csv();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 34);
        assert!(csv.starts_with("# robot=0"));
    }

    #[test]
    fn deterministic() {
        let p = PolicyParams::init(&PolicyConfig::deployment(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let a = v_value_map(&p, &world(), &ObsConfig::default(), 1, 2.0, [2.0, 2.0], 0.5).unwrap();
        let b = v_value_map(&p, &world(), &ObsConfig::default(), 1, 2.0, [2.0, 2.0], 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_critic_gives_zero_map() {
        let p = PolicyParams::zeros(&PolicyConfig::deployment()).unwrap();
        let m = v_value_map(&p, &world(), &ObsConfig::default(), 0, 2.0, [4.0, 4.0], 0.5).unwrap();
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bad_robot_index() {
        let p = PolicyParams::zeros(&PolicyConfig::deployment()).unwrap();
        assert!(v_value_map(&p, &world(), &ObsConfig::default(), 99, 2.0, [4.0, 4.0], 0.5).is_err());
    }
}
