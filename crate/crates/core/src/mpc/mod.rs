//! Lifted-space linear MPC over one bin's model, condensed into a box QP.

mod qp;

pub use qp::{objective, projected_gradient, solve_box_qp, QpOptions, QpSolution};

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::koopman::{lift, KoopmanModel, LiftedState, ModelFamily, PolarPose, INPUT_DIM, LIFT_DIM};
use crate::local::{rollout_candidates, select_candidate, ReferencePath, DEFAULT_LOOKAHEAD, DEFAULT_ROLLOUT_STEPS};
use crate::terrain::{query_gradient, LayerStack};
use crate::vehicle::{ControlInput, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Weight on the projected output error `(r, theta)`.
    pub tracking_weight: Matrix2<f64>,
    /// Weight on the input rate `du / dt`.
    pub rate_weight: Matrix2<f64>,
    pub u_min: Vector2<f64>,
    pub u_max: Vector2<f64>,
    pub dt: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl MpcConfig {
    pub fn for_vehicle(params: &VehicleParams) -> Self {
        Self {
            horizon: 10,
            tracking_weight: Matrix2::new(10.0, 0.0, 0.0, 10.0),
            rate_weight: Matrix2::new(0.1, 0.0, 0.0, 0.1),
            u_min: Vector2::new(0.0, -params.delta_lim),
            u_max: Vector2::new(params.v_max, params.delta_lim),
            dt: 1.0 / 30.0,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("MPC horizon must be at least one step".into()));
        }
        for (name, m) in [("tracking", &self.tracking_weight), ("rate", &self.rate_weight)] {
            if !m.iter().all(|v| v.is_finite()) || (m - m.transpose()).abs().max() > 1e-12 {
                return Err(Error::Config(format!("{name} weight must be finite and symmetric")));
            }
            if SymmetricEigen::new(*m).eigenvalues.min() < -1e-12 {
                return Err(Error::Config(format!("{name} weight must be positive semidefinite")));
            }
        }
        if !(self.u_min.x < self.u_max.x && self.u_min.y < self.u_max.y) {
            return Err(Error::Config("input bounds need u_min < u_max".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("MPC dt, tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Lifts the first `horizon` poses of a polar reference.
pub fn lift_reference(reference: &[PolarPose], horizon: usize) -> Result<Vec<LiftedState>> {
    if reference.len() < horizon {
        return Err(Error::Length(format!("reference has {} poses, horizon needs {horizon}", reference.len())));
    }
    Ok(reference[..horizon].iter().map(lift).collect())
}

/// The MPC cost written as `½UᵀHU + fᵀU + c` over the stacked inputs, with the
/// lifted trajectory `Z = free + Γ U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub free_response: DVector<f64>,
    pub input_response: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl CondensedProblem {
    pub fn cost(&self, u: &DVector<f64>) -> f64 {
        objective(&self.hessian, &self.linear, u) + self.constant
    }

    pub fn predict(&self, u: &DVector<f64>) -> Vec<LiftedState> {
        let z = &self.free_response + &self.input_response * u;
        z.as_slice().chunks(LIFT_DIM).map(LiftedState::from_column_slice).collect()
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(u.len(), (0..u.len()).map(|i| u[i].clamp(self.lower[i], self.upper[i])))
    }
}

pub fn stack_inputs(u: &[Vector2<f64>]) -> DVector<f64> {
    DVector::from_iterator(u.len() * INPUT_DIM, u.iter().flat_map(|v| [v.x, v.y]))
}

pub fn unstack_inputs(u: &DVector<f64>) -> Vec<Vector2<f64>> {
    u.as_slice().chunks(INPUT_DIM).map(|c| Vector2::new(c[0], c[1])).collect()
}

/// Eliminates the lifted states by forward substitution.
pub fn condense(
    model: &KoopmanModel,
    z0: &LiftedState,
    z_ref: &[LiftedState],
    u_prev: &Vector2<f64>,
    g: &Vector2<f64>,
    cfg: &MpcConfig,
) -> Result<CondensedProblem> {
    cfg.validate()?;
    let n = cfg.horizon;
    if z_ref.len() != n {
        return Err(Error::Length(format!("lifted reference has {} states, horizon is {n}", z_ref.len())));
    }
    let (nz, nu) = (LIFT_DIM, INPUT_DIM);
    // A^k B blocks, k = 0..n-1
    let mut powers_b = Vec::with_capacity(n);
    let mut ab = model.b;
    for _ in 0..n {
        powers_b.push(ab);
        ab = model.a * ab;
    }
    let mut gamma = DMatrix::zeros(nz * n, nu * n);
    let mut free = DVector::zeros(nz * n);
    let drift = model.bg * g;
    let mut z = *z0;
    for k in 0..n {
        z = model.a * z + drift;
        free.rows_mut(k * nz, nz).copy_from(&z);
        for j in 0..=k {
            gamma.view_mut((k * nz, j * nu), (nz, nu)).copy_from(&powers_b[k - j]);
        }
    }
    let mut cbar = DMatrix::zeros(2 * n, nz * n);
    let mut qbar = DMatrix::zeros(2 * n, 2 * n);
    let mut yref = DVector::zeros(2 * n);
    let mut pbar = DMatrix::zeros(nu * n, nu * n);
    let mut diff = DMatrix::<f64>::identity(nu * n, nu * n);
    let mut d0 = DVector::zeros(nu * n);
    for k in 0..n {
        cbar.view_mut((2 * k, k * nz), (2, nz)).copy_from(&model.c);
        qbar.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&cfg.tracking_weight);
        yref.rows_mut(2 * k, 2).copy_from(&(model.c * z_ref[k]));
        pbar.view_mut((nu * k, nu * k), (nu, nu)).copy_from(&(cfg.rate_weight / (cfg.dt * cfg.dt)));
        if k > 0 {
            diff.view_mut((nu * k, nu * (k - 1)), (nu, nu)).copy_from(&(-DMatrix::<f64>::identity(nu, nu)));
        }
    }
    d0.rows_mut(0, nu).copy_from(u_prev);
    let s = &cbar * &gamma;
    let e = &cbar * &free - yref;
    let sq = s.transpose() * &qbar;
    let dp = diff.transpose() * &pbar;
    let mut hessian = (&sq * &s + &dp * &diff) * 2.0;
    hessian = (&hessian + hessian.transpose()) * 0.5;
    let linear = (&sq * &e - &dp * &d0) * 2.0;
    let constant = e.dot(&(&qbar * &e)) + d0.dot(&(&pbar * &d0));
    let lower = stack_inputs(&vec![cfg.u_min; n]);
    let upper = stack_inputs(&vec![cfg.u_max; n]);
    Ok(CondensedProblem { hessian, linear, constant, free_response: free, input_response: gamma, lower, upper })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: Vec<Vector2<f64>>,
    /// Lifted states z(1..N) under `inputs`.
    pub predicted: Vec<LiftedState>,
    pub cost: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn solve(
    model: &KoopmanModel,
    z0: &LiftedState,
    z_ref: &[LiftedState],
    u_prev: &Vector2<f64>,
    g: &Vector2<f64>,
    cfg: &MpcConfig,
) -> Result<MpcSolution> {
    let problem = condense(model, z0, z_ref, u_prev, g, cfg)?;
    let start = problem.clamp(&stack_inputs(&vec![*u_prev; cfg.horizon]));
    let opts = QpOptions { tolerance: cfg.tolerance, max_iterations: cfg.max_iterations };
    let qp = solve_box_qp(&problem.hessian, &problem.linear, &problem.lower, &problem.upper, &start, &opts)?;
    if !qp.converged {
        warn!("MPC stopped at the iteration cap with projected-gradient norm {:.3e}", qp.residual);
    }
    Ok(MpcSolution {
        predicted: problem.predict(&qp.x),
        cost: problem.cost(&qp.x),
        inputs: unstack_inputs(&qp.x),
        iterations: qp.iterations,
        residual: qp.residual,
        converged: qp.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub mpc: MpcConfig,
    pub rollout_steps: usize,
    pub lookahead: f64,
    /// Band the previous speed command is clamped to before the rollouts, so a
    /// vehicle at rest still sees candidates that move.
    pub min_rollout_speed: f64,
    pub max_rollout_speed: f64,
    pub vehicle: VehicleParams,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl ControllerConfig {
    pub fn for_vehicle(params: &VehicleParams) -> Self {
        Self {
            mpc: MpcConfig::for_vehicle(params),
            rollout_steps: DEFAULT_ROLLOUT_STEPS,
            lookahead: DEFAULT_LOOKAHEAD,
            min_rollout_speed: 0.4 * params.v_max,
            max_rollout_speed: 0.6 * params.v_max,
            vehicle: params.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.vehicle.validate()?;
        if self.rollout_steps < self.mpc.horizon {
            return Err(Error::Config("rollout horizon must cover the MPC horizon".into()));
        }
        if !(self.lookahead > 0.0) || !(self.min_rollout_speed >= 0.0 && self.min_rollout_speed <= self.max_rollout_speed) {
            return Err(Error::Config("lookahead must be positive and the rollout speed band ordered".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub input: ControlInput,
    /// Selected bin, `None` when the vehicle was told to stop.
    pub phi: Option<usize>,
    pub cte: f64,
    pub qp_iterations: usize,
    pub qp_residual: f64,
    /// Curvature implied by the previous steering command.
    pub kappa_prev: f64,
}

impl ControlOutcome {
    fn stop(kappa_prev: f64) -> Self {
        Self { input: ControlInput::stop(), phi: None, cte: f64::NAN, qp_iterations: 0, qp_residual: 0.0, kappa_prev }
    }
}

/// One control cycle from the pose, scoring candidates against the plan
/// window that starts at arc length `progress`.
pub fn control_step(
    family: &ModelFamily,
    pose: &Pose2,
    plan: &ReferencePath,
    progress: f64,
    stack: &LayerStack,
    u_prev: &ControlInput,
    cfg: &ControllerConfig,
) -> Result<ControlOutcome> {
    let kappa_prev = u_prev.delta_cmd.tan() / cfg.vehicle.wheelbase;
    let grad = query_gradient(stack, pose.position())?;
    let speed = u_prev.v_cmd.clamp(cfg.min_rollout_speed, cfg.max_rollout_speed);
    let candidates = rollout_candidates(
        family,
        pose,
        speed,
        grad,
        cfg.rollout_steps,
        cfg.vehicle.wheelbase,
        cfg.vehicle.delta_lim,
    )?;
    let window = plan.window(progress, cfg.lookahead);
    let selection = match select_candidate(&candidates, &window, &family.geometry) {
        Ok(s) => s,
        Err(Error::PlannerFailure(msg)) => {
            warn!("local planner failed ({msg}); stopping");
            return Ok(ControlOutcome::stop(kappa_prev));
        }
        Err(e) => return Err(e),
    };
    let model = &family.models[selection.phi];
    let z_ref = lift_reference(&selection.reference, cfg.mpc.horizon)?;
    let z0 = lift(&PolarPose::new(0.0, 0.0));
    let g = crate::koopman::body_gradient(pose, grad.0, grad.1);
    let u_prev_v = Vector2::new(u_prev.v_cmd, u_prev.delta_cmd);
    let sol = solve(model, &z0, &z_ref, &u_prev_v, &g, &cfg.mpc)?;
    if sol.inputs[0].iter().any(|v| !v.is_finite()) {
        return Ok(ControlOutcome::stop(kappa_prev));
    }
    Ok(ControlOutcome {
        input: ControlInput::new(sol.inputs[0].x, sol.inputs[0].y),
        phi: Some(selection.phi),
        cte: selection.cte,
        qp_iterations: sol.iterations,
        qp_residual: sol.residual,
        kappa_prev,
    })
}

/// Sequential controller that tracks its own progress along the plan.
#[derive(Debug, Clone)]
pub struct TrackingController<'a> {
    family: &'a ModelFamily,
    plan: ReferencePath,
    cfg: ControllerConfig,
    progress: f64,
    u_prev: ControlInput,
}

impl<'a> TrackingController<'a> {
    pub fn new(family: &'a ModelFamily, plan: ReferencePath, cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        family.check_complete()?;
        Ok(Self { family, plan, cfg, progress: 0.0, u_prev: ControlInput::stop() })
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn plan(&self) -> &ReferencePath {
        &self.plan
    }

    pub fn last_input(&self) -> ControlInput {
        self.u_prev
    }

    pub fn step(&mut self, pose: &Pose2, stack: &LayerStack) -> Result<ControlOutcome> {
        let (s, _) = self.plan.project(pose.position(), self.progress, 0.5, self.cfg.lookahead);
        self.progress = self.progress.max(s);
        let out = control_step(self.family, pose, &self.plan, self.progress, stack, &self.u_prev, &self.cfg)?;
        self.u_prev = out.input;
        Ok(out)
    }
}
