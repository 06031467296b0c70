use nalgebra::{DMatrix, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::snapshots::min_bin_samples;
use super::{
    lift, BinSnapshots, GradientMatrix, InputMatrix, KoopmanModel, LiftedState, ModelFamily, OutputMatrix,
    SnapshotDataset, SystemMatrix, GRAD_DIM, INPUT_DIM, LIFT_DIM,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Ridge weight on the regression matrices.
    pub lambda: f64,
    /// Identify the gradient matrix; when false it is fixed to zero.
    pub augmented: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { lambda: 1e-8, augmented: true }
    }
}

/// Solution of the lifted regression plus the sufficient statistics it was
/// computed from.
#[derive(Debug, Clone)]
pub struct LiftedFit {
    pub a: SystemMatrix,
    pub b: InputMatrix,
    pub bg: GradientMatrix,
    /// `G G^T` (without the ridge term).
    pub gram: DMatrix<f64>,
    /// `psi(Y) G^T`.
    pub cross: DMatrix<f64>,
    /// `[A B Bg]` restricted to the regressor rows actually used.
    pub stacked: DMatrix<f64>,
}

impl LiftedFit {
    /// Frobenius norm of `(psi(Y) - M G) G^T`; equals `lambda * ||M||` at the optimum.
    pub fn normal_residual(&self) -> f64 {
        (&self.cross - &self.stacked * &self.gram).norm()
    }
}

/// Solves `M (S + lambda I) = R` for `M` with symmetric positive `S`,
/// using Jacobi scaling for conditioning.
fn ridge_solve(gram: &DMatrix<f64>, cross: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let d = gram.nrows();
    let mut reg = gram.clone();
    for i in 0..d {
        reg[(i, i)] += lambda;
    }
    let scale: Vec<f64> = (0..d).map(|i| reg[(i, i)].sqrt()).collect();
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Singular("regressor row with zero energy".into()));
    }
    let scaled = DMatrix::from_fn(d, d, |i, j| reg[(i, j)] / (scale[i] * scale[j]));
    if lambda == 0.0 {
        let eig = scaled.clone().symmetric_eigen();
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
        if !(lo > hi * 1e-13) {
            return Err(Error::Singular(format!("gram condition estimate {:.3e}", hi / lo.max(f64::MIN_POSITIVE))));
        }
    }
    let chol = scaled.cholesky().ok_or_else(|| Error::Singular("cholesky factorization failed".into()))?;
    let rhs = DMatrix::from_fn(d, cross.nrows(), |i, j| cross[(j, i)] / scale[i]);
    let sol = chol.solve(&rhs);
    Ok(DMatrix::from_fn(cross.nrows(), d, |i, j| sol[(j, i)] / scale[j]))
}

/// Ridge EDMD on already-lifted snapshots. With `h = None` the gradient
/// block is omitted from the regression and returned as zero.
pub fn fit_lifted(
    psi_x: &[LiftedState],
    psi_y: &[LiftedState],
    u: &[Vector2<f64>],
    h: Option<&[Vector2<f64>]>,
    lambda: f64,
) -> Result<LiftedFit> {
    let n = psi_x.len();
    if psi_y.len() != n || u.len() != n || h.is_some_and(|h| h.len() != n) {
        return Err(Error::Dimension("snapshot column counts disagree".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("ridge lambda {lambda} must be >= 0")));
    }
    let d = LIFT_DIM + INPUT_DIM + if h.is_some() { GRAD_DIM } else { 0 };
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut cross = DMatrix::<f64>::zeros(LIFT_DIM, d);
    let mut g = vec![0.0; d];
    for k in 0..n {
        g[..LIFT_DIM].copy_from_slice(psi_x[k].as_slice());
        g[LIFT_DIM] = u[k].x;
        g[LIFT_DIM + 1] = u[k].y;
        if let Some(h) = h {
            g[LIFT_DIM + 2] = h[k].x;
            g[LIFT_DIM + 3] = h[k].y;
        }
        for i in 0..d {
            for j in i..d {
                gram[(i, j)] += g[i] * g[j];
            }
            for r in 0..LIFT_DIM {
                cross[(r, i)] += psi_y[k][r] * g[i];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let stacked = ridge_solve(&gram, &cross, lambda)?;
    if stacked.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite regression solution".into()));
    }
    let a = SystemMatrix::from_fn(|i, j| stacked[(i, j)]);
    let b = InputMatrix::from_fn(|i, j| stacked[(i, LIFT_DIM + j)]);
    let bg = if h.is_some() {
        GradientMatrix::from_fn(|i, j| stacked[(i, LIFT_DIM + INPUT_DIM + j)])
    } else {
        GradientMatrix::zeros()
    };
    Ok(LiftedFit { a, b, bg, gram, cross, stacked })
}

/// Least-squares map from lifted states back to polar poses.
pub fn fit_output_map(psi_x: &[LiftedState], x: &[Vector2<f64>], lambda: f64) -> Result<OutputMatrix> {
    if psi_x.len() != x.len() {
        return Err(Error::Dimension("output map column counts disagree".into()));
    }
    let mut gram = DMatrix::<f64>::zeros(LIFT_DIM, LIFT_DIM);
    let mut cross = DMatrix::<f64>::zeros(2, LIFT_DIM);
    for (z, xv) in psi_x.iter().zip(x) {
        gram += z * z.transpose();
        for i in 0..LIFT_DIM {
            cross[(0, i)] += xv.x * z[i];
            cross[(1, i)] += xv.y * z[i];
        }
    }
    let c = ridge_solve(&gram, &cross, lambda)?;
    Ok(OutputMatrix::from_fn(|i, j| c[(i, j)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinFitReport {
    pub bin: usize,
    pub samples: usize,
    /// RMS of the one-step polar prediction error `||C z+ - y||`.
    pub one_step_rmse: f64,
    pub normal_residual: f64,
    pub warnings: Vec<String>,
}

/// Fits one bin's model: dynamics by ridge EDMD, output map by least squares.
pub fn fit_edmd(
    data: &BinSnapshots,
    opts: &FitOptions,
    bin_index: usize,
    kappa_range: (f64, f64),
) -> Result<(KoopmanModel, BinFitReport)> {
    let psi_x: Vec<LiftedState> = data.x.iter().map(lift).collect();
    let psi_y: Vec<LiftedState> = data.y.iter().map(lift).collect();
    let h = opts.augmented.then_some(data.h.as_slice());
    let fit = fit_lifted(&psi_x, &psi_y, &data.u, h, opts.lambda)?;
    let xs: Vec<Vector2<f64>> = data.x.iter().map(|p| p.as_vector()).collect();
    let c = fit_output_map(&psi_x, &xs, opts.lambda)?;
    let model = KoopmanModel { a: fit.a, b: fit.b, bg: fit.bg, c, bin_index, kappa_range };

    let mut sq = 0.0;
    for k in 0..data.len() {
        let z1 = super::predict(&model, &psi_x[k], &data.u[k], &data.h[k]);
        sq += (model.c * z1 - data.y[k].as_vector()).norm_squared();
    }
    let one_step_rmse = if data.is_empty() { 0.0 } else { (sq / data.len() as f64).sqrt() };
    let mut warnings = Vec::new();
    if data.len() < min_bin_samples() {
        warnings.push(format!("underdetermined: {} samples", data.len()));
    }
    if opts.augmented && data.h.iter().all(|h| h.norm() == 0.0) {
        warnings.push("no gradient excitation".into());
    }
    let report = BinFitReport { bin: bin_index, samples: data.len(), one_step_rmse, normal_residual: fit.normal_residual(), warnings };
    Ok((model, report))
}

/// Fits every bin in parallel; results are ordered by bin.
pub fn fit_family(dataset: &SnapshotDataset, opts: &FitOptions) -> Result<(ModelFamily, Vec<BinFitReport>)> {
    let geom = dataset.geometry;
    let fitted: Vec<Result<(KoopmanModel, BinFitReport)>> = dataset
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, bin)| fit_edmd(bin, opts, i, geom.range(i)))
        .collect();
    let mut models = Vec::with_capacity(geom.q);
    let mut reports = Vec::with_capacity(geom.q);
    for r in fitted {
        let (m, rep) = r?;
        models.push(m);
        reports.push(rep);
    }
    Ok((ModelFamily::new(geom, models)?, reports))
}

/// `||psi(Y) - [A B Bg] G||_F^2 + lambda ||[A B Bg]||_F^2`, evaluated sample by sample.
pub fn ridge_objective(a: &SystemMatrix, b: &InputMatrix, bg: &GradientMatrix, data: &BinSnapshots, lambda: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..data.len() {
        let pred = a * lift(&data.x[k]) + b * data.u[k] + bg * data.h[k];
        total += (lift(&data.y[k]) - pred).norm_squared();
    }
    total + lambda * (a.norm_squared() + b.norm_squared() + bg.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::PolarPose;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lifted_system(rng: &mut ChaCha8Rng) -> (SystemMatrix, InputMatrix, GradientMatrix) {
        let mut a = SystemMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let rho = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        a *= 0.9 / rho;
        let b = InputMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let bg = GradientMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
        (a, b, bg)
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> PolarPose {
        PolarPose::new(rng.random_range(0.0..2.0), rng.random_range(-3.1..3.1))
    }

    #[test]
    fn recovers_exact_lifted_linear_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (a, b, bg) = random_lifted_system(&mut rng);
        let n = 800;
        let psi_x: Vec<_> = (0..n).map(|_| lift(&random_pose(&mut rng))).collect();
        let u: Vec<_> = (0..n).map(|_| Vector2::new(rng.random_range(0.0..3.0), rng.random_range(-0.35..0.35))).collect();
        let h: Vec<_> = (0..n).map(|_| Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))).collect();
        let psi_y: Vec<_> = (0..n).map(|k| a * psi_x[k] + b * u[k] + bg * h[k]).collect();
        let fit = fit_lifted(&psi_x, &psi_y, &u, Some(&h), 0.0).unwrap();
        assert!((fit.a - a).norm() < 1e-8);
        assert!((fit.b - b).norm() < 1e-8);
        assert!((fit.bg - bg).norm() < 1e-8);
    }

    #[test]
    fn rank_deficient_gram_without_ridge_is_singular() {
        let psi_x = vec![lift(&PolarPose::new(1.0, 0.3)); 50];
        let u = vec![Vector2::new(1.0, 0.0); 50];
        let r = fit_lifted(&psi_x, &psi_x, &u, None, 0.0);
        assert!(matches!(r, Err(Error::Singular(_))));
        assert!(fit_lifted(&psi_x, &psi_x, &u, None, 1e-6).is_ok());
    }

    #[test]
    fn zero_gradients_give_vanishing_gradient_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, _) = random_lifted_system(&mut rng);
        let n = 300;
        let psi_x: Vec<_> = (0..n).map(|_| lift(&random_pose(&mut rng))).collect();
        let u: Vec<_> = (0..n).map(|_| Vector2::new(rng.random_range(0.0..3.0), rng.random_range(-0.3..0.3))).collect();
        let h = vec![Vector2::zeros(); n];
        let psi_y: Vec<_> = (0..n).map(|k| a * psi_x[k] + b * u[k]).collect();
        let fit = fit_lifted(&psi_x, &psi_y, &u, Some(&h), 1e-8).unwrap();
        assert!(fit.bg.norm() < 1e-6);
        let omitted = fit_lifted(&psi_x, &psi_y, &u, None, 1e-8).unwrap();
        assert!((fit.a - omitted.a).norm() < 1e-9);
        assert!((fit.b - omitted.b).norm() < 1e-9);
    }

    #[test]
    fn normal_equation_residual_matches_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400;
        let psi_x: Vec<_> = (0..n).map(|_| lift(&random_pose(&mut rng))).collect();
        let psi_y: Vec<_> = (0..n).map(|_| lift(&random_pose(&mut rng))).collect();
        let u: Vec<_> = (0..n).map(|_| Vector2::new(rng.random_range(0.0..3.0), rng.random_range(-0.3..0.3))).collect();
        let h: Vec<_> = (0..n).map(|_| Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))).collect();
        for lambda in [1e-8, 1e-3, 1.0] {
            let fit = fit_lifted(&psi_x, &psi_y, &u, Some(&h), lambda).unwrap();
            assert!(fit.normal_residual() <= lambda * fit.stacked.norm() + 1e-8);
        }
    }

    #[test]
    fn output_map_reconstructs_radius_on_axis() {
        let xs: Vec<_> = (0..100).map(|k| PolarPose::new(k as f64 * 0.02, 0.0)).collect();
        let psi: Vec<_> = xs.iter().map(lift).collect();
        let target: Vec<_> = xs.iter().map(|p| p.as_vector()).collect();
        let c = fit_output_map(&psi, &target, 1e-10).unwrap();
        for (z, t) in psi.iter().zip(&target) {
            assert!(((c * z)[0] - t.x).abs() < 1e-6);
        }
    }
}
