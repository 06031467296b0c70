use nalgebra::{Matrix2xX, Vector2};
use serde::{Deserialize, Serialize};

use super::{assign_bin, BinGeometry, PolarPose, LIFT_DIM, REGRESSOR_DIM};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::vehicle::LogRow;

/// How training pairs are anchored: every `stride`-th log row becomes an
/// anchor, and the following `window` transitions are expressed in its body
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPolicy {
    pub window: usize,
    pub stride: usize,
    #[serde(default)]
    pub inputs: InputSource,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        Self { window: 30, stride: 1, inputs: InputSource::default() }
    }
}

/// Which logged input pair fills the regression's input channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    /// Measured speed and actual wheel angle (`v`, `delta`).
    #[default]
    Executed,
    /// Commands sent to the actuators (`v_cmd`, `delta_cmd`).
    Commanded,
}

/// Column-aligned snapshot data of one curvature bin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinSnapshots {
    pub x: Vec<PolarPose>,
    pub y: Vec<PolarPose>,
    pub u: Vec<Vector2<f64>>,
    pub h: Vec<Vector2<f64>>,
}

impl BinSnapshots {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, x: PolarPose, y: PolarPose, u: Vector2<f64>, h: Vector2<f64>) {
        self.x.push(x);
        self.y.push(y);
        self.u.push(u);
        self.h.push(h);
    }

    pub fn x_matrix(&self) -> Matrix2xX<f64> {
        Matrix2xX::from_columns(&self.x.iter().map(PolarPose::as_vector).collect::<Vec<_>>())
    }

    pub fn y_matrix(&self) -> Matrix2xX<f64> {
        Matrix2xX::from_columns(&self.y.iter().map(PolarPose::as_vector).collect::<Vec<_>>())
    }

    pub fn u_matrix(&self) -> Matrix2xX<f64> {
        Matrix2xX::from_columns(&self.u)
    }

    pub fn h_matrix(&self) -> Matrix2xX<f64> {
        Matrix2xX::from_columns(&self.h)
    }

    /// Copy with the gradient channel zeroed (non-augmented baseline).
    pub fn without_gradients(&self) -> Self {
        Self { h: vec![Vector2::zeros(); self.h.len()], ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub geometry: BinGeometry,
    pub bins: Vec<BinSnapshots>,
    pub warnings: Vec<String>,
}

impl SnapshotDataset {
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(BinSnapshots::len).collect()
    }
}

/// World-frame gradient expressed along the body axes of `frame`.
pub fn body_gradient(frame: &Pose2, gx: f64, gy: f64) -> Vector2<f64> {
    frame.rotate_to_local(Vector2::new(gx, gy))
}

/// Minimum samples for a bin's regression to be comfortably overdetermined.
pub fn min_bin_samples() -> usize {
    LIFT_DIM * REGRESSOR_DIM
}

/// Converts 30 Hz logs into anchored polar snapshots routed by the
/// instantaneous curvature (`kappa` column) of the earlier sample.
pub fn build_snapshots(logs: &[Vec<LogRow>], policy: AnchorPolicy, geom: &BinGeometry) -> Result<SnapshotDataset> {
    geom.validate()?;
    if policy.window == 0 || policy.stride == 0 {
        return Err(Error::Config("anchor window and stride must be positive".into()));
    }
    let mut bins = vec![BinSnapshots::default(); geom.q];
    for rows in logs {
        if rows.len() < 2 {
            continue;
        }
        for a in (0..rows.len() - 1).step_by(policy.stride) {
            let anchor = rows[a].pose();
            let last = (a + policy.window).min(rows.len() - 1);
            for k in a..last {
                let (cur, next) = (&rows[k], &rows[k + 1]);
                let x = PolarPose::from_local(anchor.to_local(cur.position()));
                let y = PolarPose::from_local(anchor.to_local(next.position()));
                let u = match policy.inputs {
                    InputSource::Executed => Vector2::new(cur.v, cur.delta),
                    InputSource::Commanded => Vector2::new(cur.v_cmd, cur.delta_cmd),
                };
                let h = body_gradient(&anchor, cur.gx, cur.gy);
                bins[assign_bin(cur.kappa, geom)].push(x, y, u, h);
            }
        }
    }
    let mut warnings = Vec::new();
    for (i, b) in bins.iter().enumerate() {
        if b.len() < min_bin_samples() {
            warnings.push(format!(
                "bin {i} has {} samples (< {}); fit relies on ridge regularization",
                b.len(),
                min_bin_samples()
            ));
        } else if b.h.iter().all(|h| h.norm() == 0.0) {
            warnings.push(format!("bin {i} saw no terrain gradient; gradient matrix is unidentified"));
        }
    }
    Ok(SnapshotDataset { geometry: *geom, bins, warnings })
}
