//! Polar-pose lifting, curvature binning and EDMD identification of the
//! gradient-augmented Koopman model family.
//!
//! States are vehicle-anchored: a pose is expressed in the body frame of an
//! earlier anchor pose as `(r, theta)` = (planar distance, bearing). The
//! lifted state is the monomial dictionary
//! `[1, r cos, r sin, r^2 cos, r^2 sin, r^3 cos, r^3 sin]`.

mod curvature;
mod edmd;
mod model;
mod snapshots;

pub use curvature::{assign_bin, instantaneous_curvature, instantaneous_curvature_with, BinGeometry, DEFAULT_V_EPS};
pub use edmd::{fit_edmd, fit_family, fit_lifted, fit_output_map, ridge_objective, BinFitReport, FitOptions, LiftedFit};
pub use model::{predict, project, read_family, select_model, write_family, KoopmanModel, ModelFamily};
pub use snapshots::{build_snapshots, body_gradient, AnchorPolicy, InputSource, BinSnapshots, SnapshotDataset};

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point2};

/// Lifted dimension.
pub const LIFT_DIM: usize = 7;
/// Control inputs `(v, delta)`.
pub const INPUT_DIM: usize = 2;
/// Gradient channels `(g_x, g_y)`.
pub const GRAD_DIM: usize = 2;
/// Rows of the regressor stack `[psi(x); u; h]`.
pub const REGRESSOR_DIM: usize = LIFT_DIM + INPUT_DIM + GRAD_DIM;

pub type LiftedState = SVector<f64, LIFT_DIM>;
pub type SystemMatrix = SMatrix<f64, LIFT_DIM, LIFT_DIM>;
pub type InputMatrix = SMatrix<f64, LIFT_DIM, INPUT_DIM>;
pub type GradientMatrix = SMatrix<f64, LIFT_DIM, GRAD_DIM>;
pub type OutputMatrix = SMatrix<f64, 2, LIFT_DIM>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPose {
    pub r: f64,
    pub theta: f64,
}

impl PolarPose {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Canonical form: `r >= 0`, `theta` in (-pi, pi]. A negative range is
    /// folded onto the same Cartesian point.
    pub fn canonical(r: f64, theta: f64) -> Self {
        if r < 0.0 {
            Self { r: -r, theta: wrap_angle(theta + std::f64::consts::PI) }
        } else {
            Self { r, theta: wrap_angle(theta) }
        }
    }

    pub fn from_local(p: Point2) -> Self {
        let r = p.norm();
        let theta = if r > 0.0 { wrap_angle(p.y.atan2(p.x)) } else { 0.0 };
        Self { r, theta }
    }

    pub fn to_local(&self) -> Point2 {
        Point2::new(self.r * self.theta.cos(), self.r * self.theta.sin())
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.r, self.theta)
    }
}

pub fn lift(x: &PolarPose) -> LiftedState {
    let (s, c) = x.theta.sin_cos();
    let r = x.r;
    let r2 = r * r;
    let r3 = r2 * r;
    LiftedState::from([1.0, r * c, r * s, r2 * c, r2 * s, r3 * c, r3 * s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn lift_examples() {
        let z = lift(&PolarPose::new(0.0, 1.234));
        assert_eq!(z.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let z = lift(&PolarPose::new(1.0, 0.0));
        assert_eq!(z.as_slice(), &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let z = lift(&PolarPose::new(2.0, FRAC_PI_2));
        let expect = [1.0, 0.0, 2.0, 0.0, 4.0, 0.0, 8.0];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn canonical_folds_negative_range() {
        let p = PolarPose::canonical(-1.0, 0.25);
        assert_eq!(p.r, 1.0);
        let a = PolarPose::new(-1.0, 0.25);
        let (x, y) = (a.r * a.theta.cos(), a.r * a.theta.sin());
        assert!((p.to_local() - Point2::new(x, y)).norm() < 1e-15);
    }
}
