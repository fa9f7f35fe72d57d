//! Per-robot observations: own state relative to the goal, the K nearest
//! neighbors, and a 3×3 window sampled from the obstacle distance field.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};
use crate::world::{ObstacleLayout, WorldState};

pub const SELF_DIM: usize = 19;
pub const NEIGHBOR_DIM: usize = 6;
pub const OBSTACLE_DIM: usize = 9;
/// Spacing of the obstacle window samples, m.
pub const SDF_RESOLUTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    /// Number of neighbors each robot observes.
    pub k_neighbors: usize,
    /// Ceiling applied to obstacle distances, m.
    pub d_max_sense: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig {
            k_neighbors: 2,
            d_max_sense: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotObservation {
    /// Position relative to goal (3), velocity (3), rotation row-major (9),
    /// body rates (3), altitude (1).
    pub self_obs: [f64; SELF_DIM],
    /// Relative position (3) and velocity (3) per neighbor, nearest first.
    pub neighbor_obs: Vec<[f64; NEIGHBOR_DIM]>,
    pub obstacle_obs: [f64; OBSTACLE_DIM],
}

impl RobotObservation {
    pub fn k(&self) -> usize {
        self.neighbor_obs.len()
    }

    pub fn is_finite(&self) -> bool {
        self.self_obs.iter().all(|v| v.is_finite())
            && self.neighbor_obs.iter().flatten().all(|v| v.is_finite())
            && self.obstacle_obs.iter().all(|v| v.is_finite())
    }

    /// Position relative to the goal.
    pub fn goal_offset(&self) -> Vector3<f64> {
        Vector3::new(self.self_obs[0], self.self_obs[1], self.self_obs[2])
    }
}

pub fn self_observation(robot: &RobotState, goal: &Vector3<f64>) -> [f64; SELF_DIM] {
    let mut out = [0.0; SELF_DIM];
    let rel = robot.position - goal;
    out[0..3].copy_from_slice(rel.as_slice());
    out[3..6].copy_from_slice(robot.velocity.as_slice());
    for r in 0..3 {
        for c in 0..3 {
            out[6 + 3 * r + c] = robot.rotation[(r, c)];
        }
    }
    out[15..18].copy_from_slice(robot.angular_velocity.as_slice());
    out[18] = robot.position.z;
    out
}

/// Rows `(p_i - p_j, v_i - v_j)` for the `k` robots nearest to `i`; ties go to the lower index.
pub fn neighbor_observation(world: &WorldState, i: usize, k: usize) -> Result<Vec<[f64; NEIGHBOR_DIM]>> {
    let n = world.n_robots();
    if k + 1 > n {
        return Err(Error::config(
            "obs.k_neighbors",
            format!("{k} neighbors requested but only {} other robots exist", n.saturating_sub(1)),
        ));
    }
    let me = &world.robots[i];
    let mut others: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| ((me.position - world.robots[j].position).norm_squared(), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(others[..k]
        .iter()
        .map(|&(_, j)| {
            let other = &world.robots[j];
            let dp = me.position - other.position;
            let dv = me.velocity - other.velocity;
            [dp.x, dp.y, dp.z, dv.x, dv.y, dv.z]
        })
        .collect())
}

/// Nine samples of the clamped obstacle distance field on a world-aligned
/// 3×3 lattice centered at the robot. Rows run along +y, columns along +x.
pub fn sdf_window(layout: &ObstacleLayout, position: &Vector3<f64>, d_max_sense: f64) -> [f64; OBSTACLE_DIM] {
    let mut out = [d_max_sense; OBSTACLE_DIM];
    for row in 0..3 {
        let y = position.y + (row as f64 - 1.0) * SDF_RESOLUTION;
        for col in 0..3 {
            let x = position.x + (col as f64 - 1.0) * SDF_RESOLUTION;
            let mut d = d_max_sense;
            for o in &layout.obstacles {
                d = d.min(o.surface_distance(x, y));
            }
            out[3 * row + col] = d.clamp(0.0, d_max_sense);
        }
    }
    out
}

pub fn observe(world: &WorldState, i: usize, config: &ObsConfig) -> Result<RobotObservation> {
    let robot = &world.robots[i];
    Ok(RobotObservation {
        self_obs: self_observation(robot, &world.goals[i]),
        neighbor_obs: neighbor_observation(world, i, config.k_neighbors)?,
        obstacle_obs: sdf_window(&world.layout, &robot.position, config.d_max_sense),
    })
}

pub fn observe_all(world: &WorldState, config: &ObsConfig) -> Result<Vec<RobotObservation>> {
    (0..world.n_robots()).map(|i| observe(world, i, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Obstacle;
    use nalgebra::Matrix3;

    fn robots_on_x(xs: &[f64]) -> WorldState {
        let robots = xs
            .iter()
            .map(|&x| RobotState::at_rest(Vector3::new(x, 0.0, 2.0)))
            .collect::<Vec<_>>();
        let n = robots.len();
        WorldState::new(robots, vec![Vector3::new(0.0, 0.0, 2.0); n], ObstacleLayout::empty())
    }

    #[test]
    fn self_observation_at_goal() {
        let r = RobotState::at_rest(Vector3::new(1.0, 2.0, 1.5));
        let o = self_observation(&r, &Vector3::new(1.0, 2.0, 1.5));
        let mut want = [0.0; SELF_DIM];
        want[6] = 1.0;
        want[10] = 1.0;
        want[14] = 1.0;
        want[18] = 1.5;
        assert_eq!(o, want);
    }

    #[test]
    fn self_observation_sign_and_altitude() {
        let r = RobotState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        let o = self_observation(&r, &Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(&o[0..3], &[0.0, 0.0, -2.0]);
        assert_eq!(o[18], 1.0);
        let o2 = self_observation(&r, &Vector3::new(4.0, -1.0, 0.0));
        assert_eq!(o2[18], 1.0);
    }

    #[test]
    fn rotation_is_flattened_row_major() {
        let mut r = RobotState::at_rest(Vector3::zeros());
        r.rotation = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        let o = self_observation(&r, &Vector3::zeros());
        assert_eq!(&o[6..15], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn neighbors_sorted_by_distance() {
        let w = robots_on_x(&[0.0, 5.0, 1.0]);
        let rows = neighbor_observation(&w, 0, 2).unwrap();
        assert_eq!(rows[0][0], -1.0);
        assert_eq!(rows[1][0], -5.0);
        assert!(rows.iter().all(|r| r[3..].iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn neighbor_ties_break_by_index() {
        let mut w = robots_on_x(&[0.0, 1.0, -1.0]);
        w.robots[1].velocity.x = 3.0;
        let rows = neighbor_observation(&w, 0, 1).unwrap();
        assert_eq!(rows[0][0], -1.0);
        assert_eq!(rows[0][3], -3.0);
    }

    #[test]
    fn too_many_neighbors_is_config_error() {
        let w = robots_on_x(&[0.0, 1.0]);
        assert!(matches!(neighbor_observation(&w, 0, 2), Err(Error::Config { .. })));
        assert_eq!(neighbor_observation(&w, 0, 0).unwrap().len(), 0);
    }

    #[test]
    fn empty_layout_saturates() {
        let w = sdf_window(&ObstacleLayout::empty(), &Vector3::new(0.0, 0.0, 1.0), 2.0);
        assert_eq!(w, [2.0; 9]);
    }

    #[test]
    fn single_obstacle_window() {
        let mut layout = ObstacleLayout::empty();
        layout.obstacles.push(Obstacle {
            center: [1.0, 0.0],
            radius: 0.3,
        });
        let w = sdf_window(&layout, &Vector3::new(0.0, 0.0, 1.0), 2.0);
        assert!((w[4] - 0.7).abs() < 1e-12);
        assert!((w[5] - 0.6).abs() < 1e-12);
        assert!((w[3] - 0.8).abs() < 1e-12);
        // Off-axis samples by brute force.
        let corner = ((0.9f64).powi(2) + 0.01).sqrt() - 0.3;
        assert!((w[8] - corner).abs() < 1e-12);
    }

    #[test]
    fn inside_obstacle_clamps_to_zero() {
        let mut layout = ObstacleLayout::empty();
        layout.obstacles.push(Obstacle {
            center: [0.0, 0.0],
            radius: 0.3,
        });
        let w = sdf_window(&layout, &Vector3::new(0.05, 0.0, 1.0), 2.0);
        assert_eq!(w[4], 0.0);
    }

    #[test]
    fn observe_all_matches_single_calls() {
        let w = robots_on_x(&[0.0, 1.0, 2.5, -3.0]);
        let cfg = ObsConfig::default();
        let all = observe_all(&w, &cfg).unwrap();
        assert_eq!(all.len(), 4);
        for (i, o) in all.iter().enumerate() {
            assert_eq!(*o, observe(&w, i, &cfg).unwrap());
            assert_eq!(o.k(), 2);
        }
        assert_eq!(all, observe_all(&w, &cfg).unwrap());
    }
}
