//! Per-robot reward: goal distance, collisions and proximity, control effort.

use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};
use crate::obs::NEIGHBOR_DIM;
use crate::world::CollisionEvents;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub alpha_dist: f64,
    pub alpha_ocol: f64,
    pub alpha_rcol: f64,
    pub alpha_rclose: f64,
    /// Distance below which neighbors are penalized, m.
    pub d_rclose: f64,
    pub alpha_floor: f64,
    pub alpha_omega: f64,
    pub alpha_f: f64,
    pub alpha_orient: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha_dist: 0.1,
            alpha_ocol: 5.0,
            alpha_rcol: 5.0,
            alpha_rclose: 0.1,
            d_rclose: 0.6,
            alpha_floor: 5.0,
            alpha_omega: 0.02,
            alpha_f: 0.01,
            alpha_orient: 0.02,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self, robot_radius: f64) -> Result<()> {
        let all = [
            ("reward.alpha_dist", self.alpha_dist),
            ("reward.alpha_ocol", self.alpha_ocol),
            ("reward.alpha_rcol", self.alpha_rcol),
            ("reward.alpha_rclose", self.alpha_rclose),
            ("reward.alpha_floor", self.alpha_floor),
            ("reward.alpha_omega", self.alpha_omega),
            ("reward.alpha_f", self.alpha_f),
            ("reward.alpha_orient", self.alpha_orient),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.d_rclose > 2.0 * robot_radius) {
            return Err(Error::config(
                "reward.d_rclose",
                format!("must exceed twice the robot radius ({})", 2.0 * robot_radius),
            ));
        }
        Ok(())
    }
}

pub fn distance_reward(goal_offset: &[f64; 3], w: &RewardWeights) -> f64 {
    let norm = goal_offset.iter().map(|v| v * v).sum::<f64>().sqrt();
    -w.alpha_dist * norm
}

pub fn collision_reward(events: &CollisionEvents, neighbor_obs: &[[f64; NEIGHBOR_DIM]], w: &RewardWeights) -> f64 {
    let mut r = 0.0;
    if events.obstacle_hit {
        r -= w.alpha_ocol;
    }
    if events.robot_hit {
        r -= w.alpha_rcol;
    }
    let proximity: f64 = neighbor_obs
        .iter()
        .map(|row| {
            let d = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
            (1.0 - d / w.d_rclose).max(0.0)
        })
        .sum();
    r - w.alpha_rclose * proximity
}

pub fn control_reward(state: &RobotState, thrusts: &[f64; 4], events: &CollisionEvents, w: &RewardWeights) -> f64 {
    let mut r = 0.0;
    if events.floor_hit {
        r -= w.alpha_floor;
    }
    r -= w.alpha_omega * state.angular_velocity.norm();
    r -= w.alpha_f * thrusts.iter().map(|f| f * f).sum::<f64>().sqrt();
    r + w.alpha_orient * state.rotation[(2, 2)]
}

/// Everything one robot's reward depends on at one step.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub goal_offset: [f64; 3],
    pub neighbor_obs: &'a [[f64; NEIGHBOR_DIM]],
    pub state: &'a RobotState,
    pub thrusts: [f64; 4],
    pub events: CollisionEvents,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub distance: f64,
    pub collision: f64,
    pub control: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.distance + self.collision + self.control
    }
}

pub fn reward_breakdown(inputs: &RewardInputs<'_>, w: &RewardWeights) -> RewardBreakdown {
    RewardBreakdown {
        distance: distance_reward(&inputs.goal_offset, w),
        collision: collision_reward(&inputs.events, inputs.neighbor_obs, w),
        control: control_reward(inputs.state, &inputs.thrusts, &inputs.events, w),
    }
}

pub fn total_reward(inputs: &RewardInputs<'_>, w: &RewardWeights) -> f64 {
    reward_breakdown(inputs, w).total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{hover_thrust, QuadParams};
    use nalgebra::{Matrix3, Vector3};

    fn unit() -> RewardWeights {
        RewardWeights {
            alpha_dist: 1.0,
            alpha_ocol: 1.0,
            alpha_rcol: 1.0,
            alpha_rclose: 1.0,
            d_rclose: 0.5,
            alpha_floor: 1.0,
            alpha_omega: 1.0,
            alpha_f: 1.0,
            alpha_orient: 1.0,
        }
    }

    #[test]
    fn distance_term() {
        let w = unit();
        assert_eq!(distance_reward(&[0.0; 3], &w), 0.0);
        assert_eq!(distance_reward(&[3.0, 4.0, 0.0], &w), -5.0);
        assert_eq!(distance_reward(&[6.0, 8.0, 0.0], &w), -10.0);
    }

    #[test]
    fn collision_term() {
        let w = unit();
        let none = CollisionEvents::default();
        assert_eq!(collision_reward(&none, &[[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]], &w), 0.0);
        assert_eq!(collision_reward(&none, &[[0.0, 0.5, 0.0, 0.0, 0.0, 0.0]], &w), 0.0);
        assert_eq!(collision_reward(&none, &[[0.0, 0.0, 0.25, 0.0, 0.0, 0.0]], &w), -0.5);
        let both = CollisionEvents {
            obstacle_hit: true,
            robot_hit: true,
            floor_hit: true,
        };
        assert_eq!(collision_reward(&both, &[], &w), -2.0);
    }

    #[test]
    fn control_term() {
        let w = unit();
        let mut s = RobotState::at_rest(Vector3::zeros());
        let none = CollisionEvents::default();
        assert_eq!(control_reward(&s, &[0.0; 4], &none, &w), 1.0);
        s.rotation = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        assert_eq!(control_reward(&s, &[0.0; 4], &none, &w), -1.0);

        let w = RewardWeights {
            alpha_orient: 0.0,
            ..unit()
        };
        let s = RobotState::at_rest(Vector3::zeros());
        let p = QuadParams::default();
        let h = hover_thrust(&p);
        let r = control_reward(&s, &[h; 4], &none, &w);
        assert!((r + p.mass * crate::dynamics::GRAVITY / 2.0).abs() < 1e-15);
    }

    #[test]
    fn total_is_sum_of_parts() {
        let w = RewardWeights::default();
        let mut s = RobotState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        s.angular_velocity = Vector3::new(0.3, -0.1, 2.0);
        let rows = [[0.2, 0.1, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]];
        let inputs = RewardInputs {
            goal_offset: [0.5, -1.0, 2.0],
            neighbor_obs: &rows,
            state: &s,
            thrusts: [0.01, 0.02, 0.03, 0.04],
            events: CollisionEvents {
                robot_hit: true,
                ..Default::default()
            },
        };
        let parts = distance_reward(&inputs.goal_offset, &w)
            + collision_reward(&inputs.events, &rows, &w)
            + control_reward(&s, &inputs.thrusts, &inputs.events, &w);
        assert_eq!(total_reward(&inputs, &w), parts);

        let level = RobotState::at_rest(Vector3::zeros());
        let zero = RewardInputs {
            goal_offset: [0.0; 3],
            neighbor_obs: &[],
            state: &level,
            thrusts: [0.0; 4],
            events: CollisionEvents::default(),
        };
        assert_eq!(total_reward(&zero, &w), w.alpha_orient);
    }

    #[test]
    fn d_rclose_must_clear_two_radii() {
        let w = RewardWeights {
            d_rclose: 0.1,
            ..Default::default()
        };
        assert!(w.validate(0.05).is_err());
        assert!(RewardWeights::default().validate(0.05).is_ok());
    }
}
