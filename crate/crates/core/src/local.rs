//! Reachable-set local planner: one lifted rollout per curvature bin,
//! scored by cross-track error against the mission plan.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, Point2, Pose2};
use crate::koopman::{body_gradient, lift, predict, project, BinGeometry, ModelFamily, PolarPose};

/// Default rollout horizon (steps at 30 Hz).
pub const DEFAULT_ROLLOUT_STEPS: usize = 30;
/// Plan lookahead used for cross-track scoring (m).
pub const DEFAULT_LOOKAHEAD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub bin: usize,
    /// Rollout in the anchor frame, one entry per step.
    pub polar: Vec<PolarPose>,
    /// The same points in world coordinates.
    pub world: Vec<Point2>,
    /// Constant internal input `(v, delta_i)`.
    pub control: Vector2<f64>,
    /// False when the rollout produced non-finite values.
    pub valid: bool,
}

/// Steering angle that holds the bin's midpoint curvature, clamped to the limit.
pub fn bin_steering(bin: usize, geom: &BinGeometry, wheelbase: f64, delta_lim: f64) -> f64 {
    (wheelbase * geom.midpoint(bin)).atan().clamp(-delta_lim, delta_lim)
}

/// Rigid transform of anchor-frame polar points into the world.
pub fn polar_to_cartesian(polar: &[PolarPose], anchor: &Pose2) -> Vec<Point2> {
    polar.iter().map(|p| anchor.to_world(p.to_local())).collect()
}

/// Rolls every bin's model `steps` times from the anchor (`z = lift(0, 0)`)
/// under `(v_prev, delta_i)` with the world gradient `grad` held fixed.
pub fn rollout_candidates(
    family: &ModelFamily,
    anchor: &Pose2,
    v_prev: f64,
    grad: (f64, f64),
    steps: usize,
    wheelbase: f64,
    delta_lim: f64,
) -> Result<Vec<CandidateTrajectory>> {
    family.check_complete()?;
    if steps == 0 {
        return Err(Error::Length("rollout horizon must be at least one step".into()));
    }
    let g = body_gradient(anchor, grad.0, grad.1);
    let candidates = family
        .models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let control = Vector2::new(v_prev, bin_steering(i, &family.geometry, wheelbase, delta_lim));
            let mut z = lift(&PolarPose::new(0.0, 0.0));
            let mut polar = Vec::with_capacity(steps);
            let mut valid = true;
            for _ in 0..steps {
                z = predict(model, &z, &control, &g);
                let x = project(model, &z);
                if !(x.iter().all(|v| v.is_finite()) && z.iter().all(|v| v.is_finite())) {
                    valid = false;
                    break;
                }
                polar.push(PolarPose::canonical(x.x, x.y));
            }
            let world = if valid { polar_to_cartesian(&polar, anchor) } else { Vec::new() };
            CandidateTrajectory { bin: i, polar, world, control, valid }
        })
        .collect();
    Ok(candidates)
}

/// Mean distance of the candidate's points to the plan window.
pub fn cross_track_error(candidate: &CandidateTrajectory, window: &[Point2]) -> f64 {
    if candidate.world.is_empty() {
        return f64::INFINITY;
    }
    candidate.world.iter().map(|p| point_polyline_distance(*p, window)).sum::<f64>() / candidate.world.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub phi: usize,
    pub cte: f64,
    /// Polar reference handed to the controller.
    pub reference: Vec<PolarPose>,
}

/// Picks the valid candidate with the least cross-track error; ties go to
/// the bin whose midpoint curvature is smaller in magnitude.
pub fn select_candidate(candidates: &[CandidateTrajectory], window: &[Point2], geom: &BinGeometry) -> Result<Selection> {
    if window.is_empty() {
        return Err(Error::Length("plan window is empty".into()));
    }
    let mut best: Option<(f64, f64, &CandidateTrajectory)> = None;
    for c in candidates.iter().filter(|c| c.valid) {
        let cte = cross_track_error(c, window);
        let tie = geom.midpoint(c.bin).abs();
        let better = match best {
            None => true,
            Some((bc, bt, _)) => cte < bc || (cte == bc && tie < bt),
        };
        if better {
            best = Some((cte, tie, c));
        }
    }
    let (cte, _, c) = best.ok_or_else(|| Error::PlannerFailure("no valid candidate trajectory".into()))?;
    Ok(Selection { phi: c.bin, cte, reference: c.polar.clone() })
}

/// Polyline with arc-length bookkeeping for progress tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<Point2>,
    arc: Vec<f64>,
}

impl ReferencePath {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        let mut pts: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q| (p - q).norm() > 1e-9) {
                pts.push(p);
            }
        }
        if pts.is_empty() {
            return Err(Error::Length("reference path is empty".into()));
        }
        let mut arc = vec![0.0];
        for w in pts.windows(2) {
            let s = arc.last().copied().unwrap_or(0.0) + (w[1] - w[0]).norm();
            arc.push(s);
        }
        Ok(Self { points: pts, arc })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().expect("non-empty path")
    }

    pub fn end(&self) -> Point2 {
        *self.points.last().expect("non-empty path")
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let k = self.arc.partition_point(|a| *a <= s).saturating_sub(1).min(self.points.len().saturating_sub(2));
        if self.points.len() == 1 {
            return self.points[0];
        }
        let seg = self.arc[k + 1] - self.arc[k];
        let t = if seg > 0.0 { (s - self.arc[k]) / seg } else { 0.0 };
        self.points[k] + (self.points[k + 1] - self.points[k]) * t.clamp(0.0, 1.0)
    }

    /// Arc length of the closest point to `p` among segments overlapping
    /// `[from - back, from + ahead]`, together with its distance.
    pub fn project(&self, p: Point2, from: f64, back: f64, ahead: f64) -> (f64, f64) {
        if self.points.len() == 1 {
            return (0.0, (p - self.points[0]).norm());
        }
        let (lo, hi) = (from - back, from + ahead);
        let mut best = (from.clamp(0.0, self.length()), f64::INFINITY);
        for k in 0..self.points.len() - 1 {
            if self.arc[k + 1] < lo || self.arc[k] > hi {
                continue;
            }
            let (a, b) = (self.points[k], self.points[k + 1]);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (p - (a + ab * t)).norm();
            if d < best.1 {
                best = (self.arc[k] + t * ab.norm(), d);
            }
        }
        best
    }

    /// Sub-polyline covering arc lengths `[from, from + lookahead]`.
    pub fn window(&self, from: f64, lookahead: f64) -> Vec<Point2> {
        let from = from.clamp(0.0, self.length());
        let to = (from + lookahead).min(self.length());
        let mut out = vec![self.point_at(from)];
        for (p, s) in self.points.iter().zip(&self.arc) {
            if *s > from && *s < to {
                out.push(*p);
            }
        }
        out.push(self.point_at(to));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_steering_values() {
        let g = BinGeometry::default();
        let d = bin_steering(4, &g, 0.55, 0.35);
        assert!((d - (0.55f64 * 0.1).atan()).abs() < 1e-12);
        for i in 0..g.q {
            let a = bin_steering(i, &g, 0.55, 0.35);
            let b = bin_steering(g.q - 1 - i, &g, 0.55, 0.35);
            assert!((a + b).abs() < 1e-12);
            assert!(a.abs() <= 0.35);
        }
        assert_eq!(bin_steering(7, &g, 0.55, 0.35), 0.35);
    }

    #[test]
    fn polar_to_world_examples() {
        let anchor = Pose2::new(2.0, -1.0, 0.6);
        assert!((polar_to_cartesian(&[PolarPose::new(0.0, 0.3)], &anchor)[0] - anchor.position()).norm() < 1e-15);
        let p = polar_to_cartesian(&[PolarPose::new(1.0, 0.0)], &Pose2::new(0.0, 0.0, 0.0))[0];
        assert!((p - Point2::new(1.0, 0.0)).norm() < 1e-15);
        let world = Point2::new(4.5, 3.25);
        let polar = PolarPose::from_local(anchor.to_local(world));
        assert!((polar_to_cartesian(&[polar], &anchor)[0] - world).norm() < 1e-12);
    }

    fn cand(bin: usize, pts: Vec<Point2>) -> CandidateTrajectory {
        let anchor = Pose2::new(0.0, 0.0, 0.0);
        let polar: Vec<_> = pts.iter().map(|p| PolarPose::from_local(anchor.to_local(*p))).collect();
        CandidateTrajectory { bin, world: polar_to_cartesian(&polar, &anchor), polar, control: Vector2::zeros(), valid: true }
    }

    #[test]
    fn single_and_invalid_candidates() {
        let g = BinGeometry::default();
        let window = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let far = cand(0, vec![Point2::new(1.0, 3.0)]);
        assert_eq!(select_candidate(&[far.clone()], &window, &g).unwrap().phi, 0);
        let mut bad = cand(4, vec![Point2::new(1.0, 0.0)]);
        bad.valid = false;
        assert_eq!(select_candidate(&[far, bad.clone()], &window, &g).unwrap().phi, 0);
        assert!(matches!(select_candidate(&[bad], &window, &g), Err(Error::PlannerFailure(_))));
    }

    #[test]
    fn ties_prefer_low_curvature_bin() {
        let g = BinGeometry::default();
        let window = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let a = cand(1, vec![Point2::new(1.0, 0.2)]);
        let b = cand(3, vec![Point2::new(1.0, -0.2)]);
        assert_eq!(select_candidate(&[a, b], &window, &g).unwrap().phi, 3);
    }

    #[test]
    fn reference_path_window_and_projection() {
        let path = ReferencePath::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 6.0),
        ])
        .unwrap();
        assert_eq!(path.points().len(), 3);
        assert!((path.length() - 10.0).abs() < 1e-12);
        assert!((path.point_at(5.0) - Point2::new(4.0, 1.0)).norm() < 1e-12);
        let w = path.window(3.0, 3.0);
        assert_eq!(w, vec![Point2::new(3.0, 0.0), Point2::new(4.0, 0.0), Point2::new(4.0, 2.0)]);
        let (s, d) = path.project(Point2::new(4.5, 3.0), 0.0, 1.0, 20.0);
        assert!((s - 7.0).abs() < 1e-12 && (d - 0.5).abs() < 1e-12);
        // restricted search ignores the far leg
        let (s, _) = path.project(Point2::new(4.5, 3.0), 0.0, 1.0, 2.0);
        assert!(s <= 4.0 + 1e-12);
    }
}
