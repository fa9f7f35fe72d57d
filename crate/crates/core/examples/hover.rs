//! Open-loop flight: hover, a short pitch impulse, then free fall.

use nalgebra::Vector3;
use quadswarm::dynamics::{hover_thrust, step, QuadParams, RobotState};

fn main() {
    let p = QuadParams::default();
    let hover = [hover_thrust(&p); 4];
    let mut s = RobotState::at_rest(Vector3::new(0.0, 0.0, 2.0));

    for _ in 0..100 {
        s = step(&s, &hover, &p);
    }
    println!("after 1 s hover: z = {:.6} m", s.position.z);

    // More thrust on the front pair (+x in body frame) pitches the body.
    let h = hover[0];
    for _ in 0..5 {
        s = step(&s, &[h * 1.02, h * 0.98, h * 0.98, h * 1.02], &p);
    }
    println!("after pitch impulse: omega = {:.3?} rad/s", s.angular_velocity.as_slice());
    for _ in 0..50 {
        s = step(&s, &hover, &p);
    }
    println!(
        "tilt R33 = {:.4}, drifting at v = {:.3?} m/s, orthonormality error {:.1e}",
        s.rotation[(2, 2)],
        s.velocity.as_slice(),
        s.orthonormality_error()
    );

    let mut s = RobotState::at_rest(Vector3::new(0.0, 0.0, 8.0));
    for _ in 0..100 {
        s = step(&s, &[0.0; 4], &p);
    }
    println!("free fall 1 s: dropped {:.4} m (1/2 g t^2 = {:.4})", 8.0 - s.position.z, 0.5 * 9.81);
}
