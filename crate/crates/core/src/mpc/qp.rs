//! Box-constrained convex QP: minimize ½xᵀHx + fᵀx subject to lo ≤ x ≤ hi.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Stop when the projected-gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Projected-gradient norm at `x`.
    pub residual: f64,
    pub converged: bool,
}

pub fn objective(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + f.dot(x)
}

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, u))| v.clamp(*l, *u)))
}

/// `P(x - g) - x`; zero exactly at a KKT point.
pub fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    clamp(&(x - g), lo, hi) - x
}

/// Projected Newton on the free variables with backtracking, falling back to
/// a projected-gradient step whenever Newton fails to decrease the objective.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = f.len();
    if h.nrows() != n || h.ncols() != n || lo.len() != n || hi.len() != n || x0.len() != n {
        return Err(Error::Dimension(format!("box QP with {n} variables got inconsistent inputs")));
    }
    if lo.iter().zip(hi.iter()).any(|(l, u)| !(l <= u)) {
        return Err(Error::Parameter("box QP bounds must satisfy lo <= hi".into()));
    }
    // Lipschitz bound for the gradient fallback.
    let lip = h.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-12);
    let mut x = clamp(x0, lo, hi);
    let mut iterations = 0;
    loop {
        let g = h * &x + f;
        let pg = projected_gradient(&x, &g, lo, hi);
        let residual = pg.norm();
        if residual <= opts.tolerance || iterations >= opts.max_iterations {
            return Ok(QpSolution { x, iterations, residual, converged: residual <= opts.tolerance });
        }
        iterations += 1;
        let fx = objective(h, f, &x);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut next = None;
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
            if let Some(chol) = hff.cholesky() {
                let d = chol.solve(&(-gf));
                let mut alpha = 1.0;
                while alpha > 1e-10 {
                    let mut trial = x.clone();
                    for (k, &i) in free.iter().enumerate() {
                        trial[i] += alpha * d[k];
                    }
                    let trial = clamp(&trial, lo, hi);
                    let ft = objective(h, f, &trial);
                    if ft <= fx + 1e-4 * g.dot(&(&trial - &x)) && ft <= fx {
                        next = Some(trial);
                        break;
                    }
                    alpha *= 0.5;
                }
            }
        }
        x = match next {
            Some(t) => t,
            None => clamp(&(&x - &g / lip), lo, hi),
        };
    }
}
