use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::{compute_gradient_map, gradient_cost, GradientGrid, HeightGrid};
use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Free,
    Obstacle,
    GradientRestricted,
}

impl CellClass {
    pub fn is_blocked(self) -> bool {
        self != CellClass::Free
    }
}

/// Inclusive rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRegion {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl CellRegion {
    pub fn new(row_min: usize, row_max: usize, col_min: usize, col_max: usize) -> Self {
        Self { row_min, row_max, col_min, col_max }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.row_min..=self.row_max).contains(&i) && (self.col_min..=self.col_max).contains(&j)
    }
}

/// Per-cell slope costs along x, y and the two diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCosts {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Along (1, 1) / sqrt(2).
    pub diag: Vec<f64>,
    /// Along (1, -1) / sqrt(2).
    pub anti_diag: Vec<f64>,
}

/// Height, gradient, gradient-cost and traversability layers sharing one
/// geometry. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub height: HeightGrid,
    pub gradients: GradientGrid,
    pub gradient_costs: GradientCosts,
    pub mask: Vec<CellClass>,
    pub g_max: f64,
    pub restrict_threshold: f64,
}

pub fn build_layer_stack(
    h: HeightGrid,
    obstacles: &[CellRegion],
    g_max: f64,
    restrict_threshold: f64,
) -> Result<LayerStack> {
    if !(g_max > 0.0) || !(restrict_threshold > 0.0) {
        return Err(Error::Parameter("g_max and restrict_threshold must be positive".into()));
    }
    let (rows, cols) = (h.rows(), h.cols());
    for r in obstacles {
        if r.row_min > r.row_max || r.col_min > r.col_max || r.row_max >= rows || r.col_max >= cols {
            return Err(Error::OutOfBounds(format!("obstacle region {r:?} outside {rows}x{cols} grid")));
        }
    }
    let gradients = compute_gradient_map(&h)?;
    let n = rows * cols;
    let mut costs = GradientCosts {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        diag: Vec::with_capacity(n),
        anti_diag: Vec::with_capacity(n),
    };
    let mut mask = vec![CellClass::Free; n];
    for k in 0..n {
        let (gx, gy) = (gradients.gx[k], gradients.gy[k]);
        let directional = [gx, gy, (gx + gy) * FRAC_1_SQRT_2, (gx - gy) * FRAC_1_SQRT_2];
        costs.x.push(gradient_cost(directional[0], g_max));
        costs.y.push(gradient_cost(directional[1], g_max));
        costs.diag.push(gradient_cost(directional[2], g_max));
        costs.anti_diag.push(gradient_cost(directional[3], g_max));
        if directional.iter().any(|g| g.abs() > restrict_threshold) {
            mask[k] = CellClass::GradientRestricted;
        }
    }
    for r in obstacles {
        for i in r.row_min..=r.row_max {
            for j in r.col_min..=r.col_max {
                mask[i * cols + j] = CellClass::Obstacle;
            }
        }
    }
    let stack = LayerStack { height: h, gradients, gradient_costs: costs, mask, g_max, restrict_threshold };
    stack.audit()?;
    Ok(stack)
}

/// Nearest-cell gradient lookup.
pub fn query_gradient(stack: &LayerStack, p: Point2) -> Result<(f64, f64)> {
    let (i, j) = stack.height.nearest_cell(p)?;
    Ok(stack.gradients.at(i, j))
}

impl LayerStack {
    /// Checks that every layer matches the height grid's shape.
    pub fn audit(&self) -> Result<()> {
        let n = self.height.rows() * self.height.cols();
        let g = &self.gradients;
        let c = &self.gradient_costs;
        let lens = [g.gx.len(), g.gy.len(), c.x.len(), c.y.len(), c.diag.len(), c.anti_diag.len(), self.mask.len()];
        if g.rows != self.height.rows() || g.cols != self.height.cols() || lens.iter().any(|&l| l != n) {
            return Err(Error::Dimension("layer stack layers disagree in shape".into()));
        }
        if [&c.x, &c.y, &c.diag, &c.anti_diag].iter().any(|l| l.iter().any(|v| !(*v >= 0.0))) {
            return Err(Error::Parameter("negative or non-finite gradient cost".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.height.rows()
    }

    pub fn cols(&self) -> usize {
        self.height.cols()
    }

    pub fn class(&self, i: usize, j: usize) -> CellClass {
        self.mask[i * self.cols() + j]
    }

    /// Traversability at a world point; points off the map are reported blocked.
    pub fn class_at(&self, p: Point2) -> CellClass {
        match self.height.nearest_cell(p) {
            Ok((i, j)) => self.class(i, j),
            Err(_) => CellClass::Obstacle,
        }
    }

    pub fn gradient_at(&self, p: Point2) -> Result<(f64, f64)> {
        query_gradient(self, p)
    }

    pub fn height_at(&self, p: Point2) -> Result<f64> {
        self.height.height_at(p)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.height.contains(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{default_g_max, default_restrict_threshold};

    fn flat(rows: usize, cols: usize) -> HeightGrid {
        HeightGrid::from_fn([0.0, 0.0], 0.5, rows, cols, |_, _| 0.0).unwrap()
    }

    #[test]
    fn flat_no_obstacles_is_free_and_costless() {
        let s = build_layer_stack(flat(8, 9), &[], default_g_max(), default_restrict_threshold()).unwrap();
        assert!(s.mask.iter().all(|c| *c == CellClass::Free));
        assert!(s.gradient_costs.x.iter().all(|c| *c == 0.0));
        assert!(s.gradient_costs.anti_diag.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn obstacle_rectangle_passthrough() {
        let region = CellRegion::new(2, 3, 4, 6);
        let s = build_layer_stack(flat(8, 9), &[region], default_g_max(), default_restrict_threshold()).unwrap();
        for i in 0..8 {
            for j in 0..9 {
                let expect = if region.contains(i, j) { CellClass::Obstacle } else { CellClass::Free };
                assert_eq!(s.class(i, j), expect);
            }
        }
    }

    #[test]
    fn steep_ramp_is_restricted() {
        let slope = 30f64.to_radians().tan();
        let h = HeightGrid::from_fn([0.0, 0.0], 0.5, 10, 10, |x, _| slope * x).unwrap();
        let s = build_layer_stack(h, &[], default_g_max(), default_restrict_threshold()).unwrap();
        assert!(s.mask.iter().all(|c| *c == CellClass::GradientRestricted));
        // 10 degree ramp stays free
        let gentle = 10f64.to_radians().tan();
        let h = HeightGrid::from_fn([0.0, 0.0], 0.5, 10, 10, |x, _| gentle * x).unwrap();
        let s = build_layer_stack(h, &[], default_g_max(), default_restrict_threshold()).unwrap();
        assert!(s.mask.iter().all(|c| *c == CellClass::Free));
    }

    #[test]
    fn out_of_bounds_region_rejected() {
        let r = build_layer_stack(flat(5, 5), &[CellRegion::new(0, 5, 0, 1)], default_g_max(), default_restrict_threshold());
        assert!(matches!(r, Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn query_nearest_and_corner() {
        let h = HeightGrid::from_fn([-1.0, 2.0], 0.5, 7, 7, |x, y| x * x + 3.0 * y).unwrap();
        let s = build_layer_stack(h, &[], default_g_max(), default_restrict_threshold()).unwrap();
        let c = s.height.cell_center(3, 4);
        assert_eq!(query_gradient(&s, c).unwrap(), s.gradients.at(3, 4));
        let off = c + Point2::new(0.4 * 0.5, -0.4 * 0.5);
        assert_eq!(query_gradient(&s, off).unwrap(), s.gradients.at(3, 4));
        assert_eq!(query_gradient(&s, s.height.max_corner()).unwrap(), s.gradients.at(6, 6));
        assert_eq!(query_gradient(&s, Point2::new(-1.0, 2.0)).unwrap(), s.gradients.at(0, 0));
        assert!(query_gradient(&s, Point2::new(-1.1, 2.0)).is_err());
    }
}
