use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::LogRow;

/// Speed below which curvature is held rather than recomputed (m/s).
pub const DEFAULT_V_EPS: f64 = 0.05;

/// Partition of `[-kappa_max, kappa_max]` into `q` equal half-open bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGeometry {
    pub q: usize,
    pub kappa_max: f64,
}

impl Default for BinGeometry {
    fn default() -> Self {
        Self { q: 8, kappa_max: 0.8 }
    }
}

impl BinGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || !(self.kappa_max > 0.0) {
            return Err(Error::Config(format!("invalid bin geometry {self:?}")));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = 2.0 * self.kappa_max / self.q as f64;
        (0..=self.q).map(|i| -self.kappa_max + i as f64 * w).collect()
    }

    pub fn range(&self, bin: usize) -> (f64, f64) {
        let e = self.edges();
        (e[bin], e[bin + 1])
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        let (lo, hi) = self.range(bin);
        0.5 * (lo + hi)
    }
}

/// Zero-based bin index for `kappa`. Interior bins are `[lo, hi)`; values
/// below the range clamp to the first bin and values at or above
/// `kappa_max` to the last.
pub fn assign_bin(kappa: f64, geom: &BinGeometry) -> usize {
    let edges = geom.edges();
    // number of interior edges (1..q) that are <= kappa
    let above = edges[1..geom.q].partition_point(|e| *e <= kappa);
    above.min(geom.q - 1)
}

pub fn instantaneous_curvature(rows: &[LogRow]) -> Result<Vec<f64>> {
    instantaneous_curvature_with(rows, DEFAULT_V_EPS)
}

/// Yaw rate over speed, with the yaw rate from central differences of the
/// unwrapped yaw. Samples slower than `v_eps` hold the previous valid value
/// (leading ones take the first valid value). Positive means turning left.
pub fn instantaneous_curvature_with(rows: &[LogRow], v_eps: f64) -> Result<Vec<f64>> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Length(format!("curvature needs at least 3 log rows, got {n}")));
    }
    let mut yaw = Vec::with_capacity(n);
    yaw.push(rows[0].yaw);
    for k in 1..n {
        let d = crate::geometry::wrap_angle(rows[k].yaw - rows[k - 1].yaw);
        yaw.push(yaw[k - 1] + d);
    }
    let mut raw: Vec<Option<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = match k {
            0 => (0, 1),
            k if k == n - 1 => (n - 2, n - 1),
            k => (k - 1, k + 1),
        };
        let dt = rows[b].t - rows[a].t;
        let v = rows[k].v;
        raw.push((v > v_eps && dt > 0.0).then(|| (yaw[b] - yaw[a]) / dt / v));
    }
    let first = raw
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::CurvatureUndefined("vehicle never exceeded the speed threshold".into()))?;
    let mut last = first;
    Ok(raw
        .into_iter()
        .map(|k| {
            if let Some(k) = k {
                last = k;
            }
            last
        })
        .collect())
}
