use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, Point2};

/// Distance of every executed point to the reference polyline.
pub fn cross_track_series(executed: &[Point2], reference: &[Point2]) -> Result<Vec<f64>> {
    if executed.is_empty() || reference.is_empty() {
        return Err(Error::Length("tracking error needs non-empty executed and reference paths".into()));
    }
    Ok(executed.iter().map(|p| point_polyline_distance(*p, reference)).collect())
}

/// Root-mean-square point-to-polyline distance.
pub fn tracking_rmse(executed: &[Point2], reference: &[Point2]) -> Result<f64> {
    let d = cross_track_series(executed, reference)?;
    Ok((d.iter().map(|e| e * e).sum::<f64>() / d.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// RMS tracking error (m).
    pub rmse: f64,
    pub max_cross_track: f64,
    /// Cross-track error of each executed point.
    pub cross_track: Vec<f64>,
    pub completed: bool,
    pub diverged: bool,
    /// Per-bin sample fractions of the training data, when known.
    #[serde(default)]
    pub bin_coverage: Vec<f64>,
    pub metadata: RunMetadata,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mission: String,
    pub seed: u64,
    pub duration: f64,
    pub ticks: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn from_paths(executed: &[Point2], reference: &[Point2], completed: bool, diverged: bool, metadata: RunMetadata) -> Result<Self> {
        let cross_track = cross_track_series(executed, reference)?;
        let rmse = (cross_track.iter().map(|e| e * e).sum::<f64>() / cross_track.len() as f64).sqrt();
        let max_cross_track = cross_track.iter().copied().fold(0.0, f64::max);
        Ok(Self { rmse, max_cross_track, cross_track, completed, diverged, bin_coverage: Vec::new(), metadata })
    }
}
