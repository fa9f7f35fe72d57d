use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Ticks averaged for the distance-to-goal metric (one second at 100 Hz).
pub const FINAL_WINDOW_TICKS: usize = 100;

/// Recorded episode. Indexed `[tick][robot]`; tick 0 is the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vec<Vector3<f64>>>,
    /// Goal of each robot at each tick (goals move in pursuit and swap scenarios).
    pub goals: Vec<Vec<Vector3<f64>>>,
    /// New-contact collision flags per step; one row fewer than `positions`.
    pub collisions: Vec<Vec<bool>>,
    /// Wall-clock seconds spent observing and running the policy.
    pub inference_seconds: f64,
    pub decisions: u64,
}

impl Trajectory {
    pub fn n_robots(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn n_ticks(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotReport {
    pub reached_goal: bool,
    pub collided: bool,
    pub final_second_mean_distance: f64,
    pub flight_distance: f64,
}

impl RobotReport {
    pub fn success(&self) -> bool {
        self.reached_goal && !self.collided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub robots: Vec<RobotReport>,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_final_distance: f64,
    pub mean_flight_distance: f64,
    /// Mean wall-clock per robot decision, ms.
    pub inference_ms: f64,
}

/// Score one episode.
///
/// A robot succeeds when it ends within `success_radius` of its goal and never
/// collided. The distance metric is the mean over the last second of the per-tick
/// distance to the goal of that tick.
pub fn score_episode(traj: &Trajectory, success_radius: f64) -> EpisodeReport {
    let n = traj.n_robots();
    let ticks = traj.n_ticks();
    let window = FINAL_WINDOW_TICKS.min(ticks);
    let robots: Vec<RobotReport> = (0..n)
        .map(|i| {
            let dist = |t: usize| (traj.positions[t][i] - traj.goals[t][i]).norm();
            let final_second = (ticks - window..ticks).map(dist).sum::<f64>() / window.max(1) as f64;
            let flight = traj.positions.windows(2).map(|w| (w[1][i] - w[0][i]).norm()).sum();
            RobotReport {
                reached_goal: ticks > 0 && dist(ticks - 1) <= success_radius,
                collided: traj.collisions.iter().any(|row| row[i]),
                final_second_mean_distance: final_second,
                flight_distance: flight,
            }
        })
        .collect();
    let nf = n.max(1) as f64;
    EpisodeReport {
        success_rate: robots.iter().filter(|r| r.success()).count() as f64 / nf,
        collision_rate: robots.iter().filter(|r| r.collided).count() as f64 / nf,
        mean_final_distance: robots.iter().map(|r| r.final_second_mean_distance).sum::<f64>() / nf,
        mean_flight_distance: robots.iter().map(|r| r.flight_distance).sum::<f64>() / nf,
        inference_ms: if traj.decisions > 0 {
            1e3 * traj.inference_seconds / traj.decisions as f64
        } else {
            0.0
        },
        robots,
    }
}

/// Success rate over several episodes: success flags counted over `R · E` robots.
pub fn pooled_success_rate(reports: &[EpisodeReport]) -> f64 {
    let total: usize = reports.iter().map(|r| r.robots.len()).sum();
    let ok: usize = reports.iter().map(|r| r.robots.iter().filter(|x| x.success()).count()).sum();
    if total == 0 {
        0.0
    } else {
        ok as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(positions: Vec<Vector3<f64>>, goal: Vector3<f64>, collide_at: Option<usize>) -> Trajectory {
        let t = positions.len();
        Trajectory {
            goals: vec![vec![goal]; t],
            collisions: (0..t - 1).map(|k| vec![Some(k) == collide_at]).collect(),
            positions: positions.into_iter().map(|p| vec![p]).collect(),
            inference_seconds: 0.0,
            decisions: 0,
        }
    }

    #[test]
    fn stationary_at_goal() {
        let g = Vector3::new(1.0, 2.0, 2.0);
        let r = score_episode(&single(vec![g; 300], g, None), 0.3);
        assert!(r.robots[0].success());
        assert_eq!(r.robots[0].final_second_mean_distance, 0.0);
        assert_eq!(r.robots[0].flight_distance, 0.0);
        assert_eq!((r.success_rate, r.collision_rate), (1.0, 0.0));
    }

    #[test]
    fn straight_flight_length() {
        let ps: Vec<_> = (0..=300).map(|k| Vector3::new(k as f64 * 0.01, 0.0, 1.0)).collect();
        let r = score_episode(&single(ps, Vector3::new(3.0, 0.0, 1.0), None), 0.3);
        assert!((r.robots[0].flight_distance - 3.0).abs() < 1e-9);
        // Last 100 ticks sit 0.00..0.99 m short of the goal.
        assert!((r.robots[0].final_second_mean_distance - 0.495).abs() < 1e-9);
    }

    #[test]
    fn collision_then_reach_is_not_success() {
        let g = Vector3::new(0.0, 0.0, 2.0);
        let r = score_episode(&single(vec![g; 200], g, Some(10)), 0.3);
        assert!(r.robots[0].reached_goal && r.robots[0].collided);
        assert_eq!((r.success_rate, r.collision_rate), (0.0, 1.0));
    }

    #[test]
    fn pooled_rate_counts_robots() {
        let g = Vector3::zeros();
        let ok = score_episode(&single(vec![g; 10], g, None), 0.3);
        let bad = score_episode(&single(vec![g; 10], g, Some(2)), 0.3);
        assert_eq!(pooled_success_rate(&[ok.clone(), bad.clone(), bad]), 1.0 / 3.0);
        assert_eq!(pooled_success_rate(&[]), 0.0);
    }
}
