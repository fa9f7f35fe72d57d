//! Rigid-body quadrotor model driven by per-rotor thrust commands.
//!
//! Rotors sit in an X configuration in the body frame. Index order is
//! front-right, back-right, back-left, front-left (x forward, y left, z up),
//! with alternating spin so that rotors 0 and 2 produce negative yaw drag and
//! rotors 1 and 3 positive yaw drag.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// World frame, m.
    pub position: Vector3<f64>,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    /// Body to world.
    pub rotation: Matrix3<f64>,
    /// Body frame, rad/s.
    pub angular_velocity: Vector3<f64>,
}

impl RobotState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        RobotState {
            position,
            velocity: Vector3::zeros(),
            rotation: Matrix3::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }

    /// `max |RᵀR - I|` over all entries.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia_diag: [f64; 3],
    pub arm_length: f64,
    pub max_thrust_per_rotor: f64,
    pub torque_coefficient: f64,
    pub radius: f64,
    pub dt: f64,
    /// Body rates are clipped to this norm, rad/s (the gyro range of small flight controllers).
    pub max_angular_speed: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            mass: 0.028,
            inertia_diag: [1.4e-5, 1.4e-5, 2.2e-5],
            arm_length: 0.046,
            max_thrust_per_rotor: 0.15,
            torque_coefficient: 0.006,
            radius: 0.05,
            dt: 0.01,
            max_angular_speed: 35.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("quad.mass", self.mass),
            ("quad.arm_length", self.arm_length),
            ("quad.max_thrust_per_rotor", self.max_thrust_per_rotor),
            ("quad.torque_coefficient", self.torque_coefficient),
            ("quad.radius", self.radius),
            ("quad.dt", self.dt),
            ("quad.max_angular_speed", self.max_angular_speed),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if self.inertia_diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("quad.inertia_diag", "all entries must be positive"));
        }
        Ok(())
    }

    /// Body-frame rotor positions (x, y).
    pub fn rotor_positions(&self) -> [[f64; 2]; 4] {
        let d = self.arm_length / std::f64::consts::SQRT_2;
        [[d, -d], [-d, -d], [-d, d], [d, d]]
    }
}

/// Yaw drag direction of each rotor.
const SPIN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Linear map from thrust levels in `[0, 1]` to rotor thrusts in newtons.
/// Out-of-range levels are clamped; non-finite levels are rejected.
pub fn action_to_thrusts(action: &[f64; 4], params: &QuadParams) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (f, a) in out.iter_mut().zip(action) {
        if !a.is_finite() {
            return Err(Error::NonFinite("policy action"));
        }
        *f = a.clamp(0.0, 1.0) * params.max_thrust_per_rotor;
    }
    Ok(out)
}

pub fn hover_thrust(params: &QuadParams) -> f64 {
    params.mass * GRAVITY / 4.0
}

/// Body-frame torque produced by the given rotor thrusts.
pub fn body_torque(thrusts: &[f64; 4], params: &QuadParams) -> Vector3<f64> {
    let mut torque = Vector3::zeros();
    for ((f, r), spin) in thrusts.iter().zip(params.rotor_positions()).zip(SPIN) {
        // r × (0, 0, f)
        torque.x += r[1] * f;
        torque.y -= r[0] * f;
        torque.z += spin * params.torque_coefficient * f;
    }
    torque
}

/// Advance one rigid body by `params.dt`.
///
/// Angular and linear velocities take a forward Euler step from the current
/// forces, then attitude and position are advanced with the updated rates.
/// Position uses the mean of old and new velocity, which is exact under
/// constant acceleration. Body rates are clipped to `max_angular_speed`; without
/// drag, explicit gyroscopic coupling otherwise diverges under sustained torque.
/// The rotation is re-orthonormalized afterwards.
pub fn step(state: &RobotState, thrusts: &[f64; 4], params: &QuadParams) -> RobotState {
    let dt = params.dt;
    let inertia = Vector3::from(params.inertia_diag);

    let torque = body_torque(thrusts, params);
    let omega = state.angular_velocity;
    let gyro = omega.cross(&inertia.component_mul(&omega));
    let alpha = (torque - gyro).component_div(&inertia);
    let mut omega_next = omega + alpha * dt;
    let spin = omega_next.norm();
    if spin > params.max_angular_speed {
        omega_next *= params.max_angular_speed / spin;
    }

    let total_thrust: f64 = thrusts.iter().sum();
    let body_z = state.rotation.column(2).into_owned();
    let accel = body_z * (total_thrust / params.mass) - Vector3::new(0.0, 0.0, GRAVITY);
    let velocity_next = state.velocity + accel * dt;
    let position_next = state.position + (state.velocity + velocity_next) * (0.5 * dt);

    let delta = Rotation3::new(omega_next * dt);
    let rotation_next = orthonormalize(&(state.rotation * delta.matrix()));

    RobotState {
        position: position_next,
        velocity: velocity_next,
        rotation: rotation_next,
        angular_velocity: omega_next,
    }
}

/// Gram-Schmidt on the columns, keeping a right-handed frame.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let x = m.column(0).normalize();
    let y_raw = m.column(1) - x * x.dot(&m.column(1));
    let y = y_raw.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thrust_mapping_is_linear() {
        let p = QuadParams::default();
        assert_eq!(action_to_thrusts(&[0.0; 4], &p).unwrap(), [0.0; 4]);
        assert_eq!(action_to_thrusts(&[1.0; 4], &p).unwrap(), [0.15; 4]);
        let f = action_to_thrusts(&[0.5, 0.0, 1.0, 0.25], &p).unwrap();
        let want = [0.075, 0.0, 0.15, 0.0375];
        for (a, b) in f.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn thrust_mapping_clamps_and_rejects_nan() {
        let p = QuadParams::default();
        assert_eq!(action_to_thrusts(&[-1.0, 2.0, 0.0, 1.0], &p).unwrap(), [0.0, 0.15, 0.0, 0.15]);
        assert!(matches!(
            action_to_thrusts(&[f64::NAN, 0.0, 0.0, 0.0], &p),
            Err(Error::NonFinite(_))
        ));
        assert!(action_to_thrusts(&[0.0, f64::INFINITY, 0.0, 0.0], &p).is_err());
    }

    #[test]
    fn hover_thrust_values() {
        let mut p = QuadParams::default();
        assert!((hover_thrust(&p) - 0.06867).abs() < 1e-12);
        p.mass = 0.0;
        assert_eq!(hover_thrust(&p), 0.0);
        p.mass = 0.056;
        assert!((hover_thrust(&p) - 2.0 * 0.06867).abs() < 1e-12);
    }

    #[test]
    fn hover_step_keeps_altitude() {
        let p = QuadParams::default();
        let s = RobotState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        let next = step(&s, &[hover_thrust(&p); 4], &p);
        assert!((next.position.z - 2.0).abs() < 1e-6);
    }

    #[test]
    fn free_fall_one_step() {
        let p = QuadParams::default();
        let s = RobotState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        let next = step(&s, &[0.0; 4], &p);
        assert!((next.velocity.z + GRAVITY * p.dt).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_thrust_matches_small_angle_torque() {
        let p = QuadParams::default();
        let h = hover_thrust(&p);
        let f = [h + 0.01, h, h - 0.01, h];
        let s = RobotState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        let next = step(&s, &f, &p);
        // Independent lever-arm computation: rotor 0 at (+a, -a), rotor 2 at (-a, +a),
        // a = arm / sqrt(2). From rest the gyroscopic term vanishes.
        let a = p.arm_length * 0.5f64.sqrt();
        let roll_torque = -a * f[0] - a * f[1] + a * f[2] + a * f[3];
        let pitch_torque = -(a * f[0] - a * f[1] - a * f[2] + a * f[3]);
        let roll_acc = roll_torque / p.inertia_diag[0];
        let pitch_acc = pitch_torque / p.inertia_diag[1];
        assert!(roll_acc < 0.0 && pitch_acc < 0.0);
        let got_roll = next.angular_velocity.x / p.dt;
        let got_pitch = next.angular_velocity.y / p.dt;
        assert!((got_roll - roll_acc).abs() < 1e-9 * roll_acc.abs());
        assert!((got_pitch - pitch_acc).abs() < 1e-9 * pitch_acc.abs());
        assert!(next.angular_velocity.z.abs() < 1e-12);
    }

    #[test]
    fn yaw_torque_from_alternating_drag() {
        let p = QuadParams::default();
        let t = body_torque(&[0.0, 0.1, 0.0, 0.1], &p);
        assert!((t.z - 2.0 * 0.1 * p.torque_coefficient).abs() < 1e-15);
    }

    #[test]
    fn step_is_deterministic() {
        let p = QuadParams::default();
        let mut s = RobotState::at_rest(Vector3::new(0.1, 0.2, 2.0));
        s.angular_velocity = Vector3::new(0.3, -0.2, 0.1);
        let f = [0.07, 0.05, 0.09, 0.06];
        let a = step(&s, &f, &p);
        let b = step(&s, &f, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_nonpositive_params() {
        let p = QuadParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config { field, .. }) if field == "quad.dt"));
    }

    #[test]
    fn sustained_torque_stays_bounded() {
        let p = QuadParams::default();
        let mut s = RobotState::at_rest(Vector3::new(0.0, 0.0, 2.0));
        for _ in 0..5000 {
            s = step(&s, &[0.15, 0.0, 0.0, 0.15], &p);
        }
        assert!(s.is_finite());
        assert!(s.angular_velocity.norm() <= p.max_angular_speed + 1e-9);
        assert!(s.orthonormality_error() < 1e-9);
    }
}
