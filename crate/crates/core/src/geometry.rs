//! Planar geometry for the robot frame and the room frame.
//!
//! Room frame: x to the right, y away from the robot's observation station,
//! headings in radians counter-clockwise from +x. Robot-relative bearings
//! ("azimuths") are positive to the robot's left.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point<T>) -> T {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Absolute direction of `other` as seen from `self`.
    pub fn bearing_to(&self, other: &Point<T>) -> T {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<T = f64> {
    pub x: T,
    pub y: T,
    pub heading: T,
}

impl<T: Scalar> Pose<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }

    /// Bearing of a room point relative to the robot heading, in (-pi, pi].
    pub fn azimuth_of(&self, p: &Point<T>) -> T {
        wrap_angle(self.position().bearing_to(p) - self.heading)
    }

    /// Room point at `distance` along robot-relative bearing `azimuth`.
    pub fn project(&self, azimuth: T, distance: T) -> Point<T> {
        let a = self.heading + azimuth;
        Point::new(self.x + distance * a.cos(), self.y + distance * a.sin())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r = r + two_pi;
    } else if r > T::PI() {
        r = r - two_pi;
    }
    r
}

/// Absolute angular difference, in [0, pi].
pub fn angular_distance<T: Scalar>(a: T, b: T) -> T {
    wrap_angle(a - b).abs()
}

pub fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Returns `v / |v|`, or `v` unchanged when it is the zero vector.
pub fn normalize<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    if n == T::zero() {
        return v.to_vec();
    }
    v.iter().map(|&x| x / n).collect()
}

/// Cosine similarity; zero when either vector is zero or lengths differ.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> T {
    if a.len() != b.len() {
        return T::zero();
    }
    let dot = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let denom = norm(a) * norm(b);
    if denom == T::zero() {
        T::zero()
    } else {
        dot / denom
    }
}

/// Unicycle integration over `dt` seconds: rotate first, then translate
/// along the new heading. Shared by the world body and the motion
/// controller's dead reckoning so both agree bit-for-bit.
pub fn integrate<T: Scalar>(pose: &Pose<T>, v: T, omega: T, dt: T) -> Pose<T> {
    let heading = wrap_angle(pose.heading + omega * dt);
    Pose::new(
        pose.x + v * dt * heading.cos(),
        pose.y + v * dt * heading.sin(),
        heading,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn azimuth_straight_ahead_and_left() {
        let robot = Pose::new(0.0, 0.0, PI / 2.0);
        assert_relative_eq!(robot.azimuth_of(&Point::new(0.0, 2.0)), 0.0, epsilon = 1e-12);
        assert_relative_eq!(robot.azimuth_of(&Point::new(-1.0, 0.0)), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn project_inverts_azimuth() {
        let robot = Pose::new(1.0, -2.0, 0.3);
        let p = robot.project(0.2, 2.0);
        assert_relative_eq!(robot.azimuth_of(&p), 0.2, epsilon = 1e-12);
        assert_relative_eq!(robot.position().distance(&p), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine_similarity(&[0.0f32, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn f32_kernels_agree_with_f64() {
        let a = wrap_angle(7.0f32);
        assert!((a as f64 - wrap_angle(7.0f64)).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn wrap_is_in_range(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
            prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
        }
    }
}
