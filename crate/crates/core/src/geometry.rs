//! Planar geometry shared by the planners, the controller and the metrics.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Point2 = Vector2<f64>;

/// World pose of a planar body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.yaw.cos(), self.yaw.sin())
    }

    /// Expresses a world point in this pose's body frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        let d = p - self.position();
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Maps a body-frame point to the world frame.
    pub fn to_world(&self, p: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Rotates a world-frame vector into body axes (no translation).
    pub fn rotate_to_local(&self, v: Point2) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the nearest segment of `poly`. A single-vertex
/// polyline degenerates to point distance.
pub fn point_polyline_distance(p: Point2, poly: &[Point2]) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => (p - poly[0]).norm(),
        _ => poly
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn polyline_length(poly: &[Point2]) -> f64 {
    poly.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}
