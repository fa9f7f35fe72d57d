//! Moving-goal scenarios: pursuit along a cubic Bézier curve and a one-off goal swap.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bezier {
    pub control: [Vector3<f64>; 4],
}

impl Bezier {
    /// Position at parameter `s ∈ [0, 1]` (Bernstein form).
    pub fn eval(&self, s: f64) -> Vector3<f64> {
        let s = s.clamp(0.0, 1.0);
        let u = 1.0 - s;
        let [p0, p1, p2, p3] = self.control;
        p0 * (u * u * u) + p1 * (3.0 * u * u * s) + p2 * (3.0 * u * s * s) + p3 * (s * s * s)
    }

    /// Upper bound on `|dB/ds|`.
    pub fn max_parameter_speed(&self) -> f64 {
        let c = &self.control;
        3.0 * (0..3).map(|i| (c[i + 1] - c[i]).norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitConfig {
    /// Seconds to traverse the whole curve.
    pub duration: f64,
    /// Control points are drawn in `[-half_width, half_width]²` horizontally.
    pub half_width: f64,
    pub z_range: [f64; 2],
}

impl Default for PursuitConfig {
    fn default() -> Self {
        PursuitConfig {
            duration: 15.0,
            half_width: 3.0,
            z_range: [1.5, 2.5],
        }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::config("eval.pursuit.duration", "must be positive"));
        }
        if !(self.half_width >= 0.0 && self.half_width <= 4.5) {
            return Err(Error::config("eval.pursuit.half_width", "must lie in [0, 4.5]"));
        }
        if !(self.z_range[0] > 0.0 && self.z_range[0] <= self.z_range[1] && self.z_range[1] < 10.0) {
            return Err(Error::config("eval.pursuit.z_range", "must be an increasing pair inside (0, 10)"));
        }
        Ok(())
    }

    /// A random curve starting at `start`.
    pub fn sample_curve<R: Rng + ?Sized>(&self, start: Vector3<f64>, rng: &mut R) -> Bezier {
        let mut point = || {
            Vector3::new(
                rng.gen_range(-self.half_width..=self.half_width),
                rng.gen_range(-self.half_width..=self.half_width),
                rng.gen_range(self.z_range[0]..=self.z_range[1]),
            )
        };
        Bezier {
            control: [start, point(), point(), point()],
        }
    }
}

/// Goal position at time `t` seconds along a curve traversed in `duration` seconds.
pub fn pursuit_goal(t: f64, curve: &Bezier, duration: f64) -> Vector3<f64> {
    curve.eval(t / duration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapConfig {
    /// Bounds of the uniformly drawn trigger time, s.
    pub window: [f64; 2],
}

impl Default for SwapConfig {
    fn default() -> Self {
        SwapConfig { window: [4.0, 8.0] }
    }
}

impl SwapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window[0] >= 0.0 && self.window[0] <= self.window[1]) {
            return Err(Error::config("eval.swap.window", "must be an increasing nonnegative pair"));
        }
        Ok(())
    }

    pub fn sample_trigger<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.gen_range(self.window[0]..=self.window[1])
    }
}

/// Permute goals by a uniformly random nonzero cyclic shift; returns the shift.
/// Fewer than two robots leaves the goals untouched and returns 0.
pub fn swap_goals<R: Rng + ?Sized>(world: &mut WorldState, rng: &mut R) -> usize {
    let n = world.goals.len();
    if n < 2 {
        return 0;
    }
    let shift = rng.gen_range(1..n);
    world.goals.rotate_left(shift);
    shift
}
