//! Small planar geometry helpers shared by the simulator and controllers.

use std::f64::consts::{PI, TAU};

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Wrap a phase to [0, 2*pi).
pub fn wrap_phase(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

/// Euclidean distance between two points.
pub fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12); // -pi maps to +pi
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        for k in -10..10 {
            let a = 0.3 + k as f64 * TAU;
            assert!((wrap_angle(a) - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_phase_range() {
        for k in -5..5 {
            let p = wrap_phase(1.0 + k as f64 * TAU);
            assert!((0.0..TAU).contains(&p));
            assert!((p - 1.0).abs() < 1e-9);
        }
    }
}
