//! Synchronized multi-layer 2.5D terrain representation.
//!
//! Grids are row-major; row index `i` grows along +y and column index `j`
//! along +x. Cell `(i, j)` is centred at `origin + (j, i) * resolution`.

mod dem;
mod layers;
mod synth;

pub use dem::{read_dem, write_dem_binary, write_dem_csv, DEM_MAGIC};
pub use layers::{build_layer_stack, query_gradient, CellClass, CellRegion, GradientCosts, LayerStack};
pub use synth::{generate_synthetic_terrain, TerrainRecipe, TerrainSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Slope at which the gradient cost reaches 1.
pub fn default_g_max() -> f64 {
    15f64.to_radians().tan()
}

/// Slope above which a cell is restricted.
pub fn default_restrict_threshold() -> f64 {
    25f64.to_radians().tan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightGrid {
    origin: [f64; 2],
    resolution: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

impl HeightGrid {
    pub fn new(origin: [f64; 2], resolution: f64, rows: usize, cols: usize, heights: Vec<f64>) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Parameter(format!("resolution must be positive, got {resolution}")));
        }
        if rows < 3 || cols < 3 {
            return Err(Error::Dimension(format!("height grid must be at least 3x3, got {rows}x{cols}")));
        }
        if heights.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} heights for {rows}x{cols}, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("origin must be finite".into()));
        }
        if let Some(k) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::Parameter(format!("non-finite height at flat index {k}")));
        }
        Ok(Self { origin, resolution, rows, cols, heights })
    }

    pub fn from_fn(origin: [f64; 2], resolution: f64, rows: usize, cols: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut heights = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                heights.push(f(origin[0] + j as f64 * resolution, origin[1] + i as f64 * resolution));
            }
        }
        Self::new(origin, resolution, rows, cols, heights)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.heights[i * self.cols + j]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin[0] + j as f64 * self.resolution,
            self.origin[1] + i as f64 * self.resolution,
        )
    }

    /// Upper corner of the extent (centre of the last cell).
    pub fn max_corner(&self) -> Point2 {
        self.cell_center(self.rows - 1, self.cols - 1)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let hi = self.max_corner();
        p.x >= self.origin[0] && p.y >= self.origin[1] && p.x <= hi.x && p.y <= hi.y
    }

    /// Nearest cell to `p`, `(row, col)`.
    pub fn nearest_cell(&self, p: Point2) -> Result<(usize, usize)> {
        if !self.contains(p) {
            return Err(Error::OutOfBounds(format!(
                "point ({:.3}, {:.3}) outside grid extent",
                p.x, p.y
            )));
        }
        let j = ((p.x - self.origin[0]) / self.resolution).round() as usize;
        let i = ((p.y - self.origin[1]) / self.resolution).round() as usize;
        Ok((i.min(self.rows - 1), j.min(self.cols - 1)))
    }

    pub fn height_at(&self, p: Point2) -> Result<f64> {
        let (i, j) = self.nearest_cell(p)?;
        Ok(self.at(i, j))
    }
}

/// Directional slopes (rise over run) aligned with a [`HeightGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGrid {
    pub rows: usize,
    pub cols: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.cols + j;
        (self.gx[k], self.gy[k])
    }
}

/// Central-difference gradient map divided by the cell size.
///
/// The x slope is defined for columns `1..cols-1` and the y slope for rows
/// `1..rows-1`; the outermost column (row) copies its inner neighbour.
pub fn compute_gradient_map(h: &HeightGrid) -> Result<GradientGrid> {
    let (rows, cols) = (h.rows, h.cols);
    if rows < 3 || cols < 3 {
        return Err(Error::Dimension(format!("gradient map needs at least 3x3 cells, got {rows}x{cols}")));
    }
    let res = h.resolution;
    let mut gx = vec![0.0; rows * cols];
    let mut gy = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let jc = j.clamp(1, cols - 2);
            let ic = i.clamp(1, rows - 2);
            gx[i * cols + j] = 0.5 * (h.at(i, jc + 1) - h.at(i, jc - 1)) / res;
            gy[i * cols + j] = 0.5 * (h.at(ic + 1, j) - h.at(ic - 1, j)) / res;
        }
    }
    Ok(GradientGrid { rows, cols, gx, gy })
}

/// Two-branch slope cost: linear up to `g_max`, exponential beyond.
pub fn gradient_cost(g: f64, g_max: f64) -> f64 {
    let ratio = g.abs() / g_max;
    if ratio <= 1.0 {
        ratio
    } else {
        (ratio - 1.0).exp()
    }
}
