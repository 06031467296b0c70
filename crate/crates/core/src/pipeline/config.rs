use std::path::Path;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::koopman::{AnchorPolicy, BinGeometry, FitOptions, InputSource};
use crate::mpc::{ControllerConfig, MpcConfig};
use crate::planner::{PlannerLimits, PlannerMode};
use crate::terrain::{CellRegion, TerrainRecipe, TerrainSpec};
use super::RunSettings;
use crate::vehicle::{ExcitationScript, SteeringExcitation, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptFamily {
    /// Steering chirp sweeping from slow to fast weaving.
    Sweep,
    /// Piecewise-constant random steering.
    Random,
}

/// Experiment settings, read from a single-level JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub terrain: TerrainRecipe,
    pub terrain_extent: f64,
    pub terrain_resolution: f64,
    pub obstacles: Vec<CellRegion>,
    /// Slope of unit gradient cost (deg).
    pub g_max_deg: f64,
    /// Slope above which cells are not traversable (deg).
    pub restrict_deg: f64,
    pub vehicle: VehicleParams,
    /// Simulator integration step (s), dividing the 30 Hz tick.
    pub sim_dt: f64,

    pub throttle_levels: Vec<f64>,
    pub script_families: Vec<ScriptFamily>,
    pub episodes_per_script: usize,
    pub episode_duration: f64,
    pub recenter_margin: f64,
    /// Minimum samples for a curvature bin to count as covered.
    pub coverage_floor: usize,
    /// Fraction of bins that must be covered.
    pub coverage_required: f64,

    pub bins: usize,
    pub kappa_max: f64,
    pub lambda: f64,
    pub augmented: bool,
    pub anchor_window: usize,
    pub anchor_stride: usize,
    pub anchor_inputs: InputSource,

    pub mode: PlannerMode,
    pub w: f64,
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub max_expansions: usize,

    pub horizon: usize,
    pub tracking_weight: [f64; 2],
    pub rate_weight: [f64; 2],
    pub rollout_steps: usize,
    pub lookahead: f64,
    pub min_rollout_speed: Option<f64>,
    pub max_rollout_speed: Option<f64>,
    pub qp_tolerance: f64,
    pub qp_max_iterations: usize,
    /// Cross-track distance that aborts a run (m).
    pub divergence_threshold: f64,
    /// Hard limit on a run's simulated time (s); 0 derives it from the plan length.
    pub max_run_time: f64,

    /// Aggressive held-out reference: a sinusoidal-steering run never used for training.
    pub tlp_start: [f64; 3],
    pub tlp_throttle: f64,
    pub tlp_amplitude: f64,
    pub tlp_period: f64,
    pub tlp_duration: f64,
    pub tlp_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let vehicle = VehicleParams::default();
        let mpc = MpcConfig::for_vehicle(&vehicle);
        Self {
            seed: 0,
            terrain: TerrainRecipe::Flat,
            terrain_extent: 40.0,
            terrain_resolution: 0.5,
            obstacles: Vec::new(),
            g_max_deg: 15.0,
            restrict_deg: 25.0,
            vehicle,
            sim_dt: 1.0 / 120.0,
            throttle_levels: vec![0.2, 0.35, 0.5, 0.65, 0.8],
            script_families: vec![ScriptFamily::Sweep, ScriptFamily::Random],
            episodes_per_script: 1,
            episode_duration: 60.0,
            recenter_margin: 4.0,
            coverage_floor: 200,
            coverage_required: 0.75,
            bins: 8,
            kappa_max: 0.8,
            lambda: 1e-8,
            augmented: true,
            anchor_window: AnchorPolicy::default().window,
            anchor_stride: AnchorPolicy::default().stride,
            anchor_inputs: AnchorPolicy::default().inputs,
            mode: PlannerMode::Default,
            w: 1.0,
            start: [-10.0, 0.0, 0.0],
            goal: [10.0, 0.0, 0.0],
            max_expansions: PlannerLimits::default().max_expansions,
            horizon: mpc.horizon,
            tracking_weight: [mpc.tracking_weight[(0, 0)], mpc.tracking_weight[(1, 1)]],
            rate_weight: [mpc.rate_weight[(0, 0)], mpc.rate_weight[(1, 1)]],
            rollout_steps: crate::local::DEFAULT_ROLLOUT_STEPS,
            lookahead: crate::local::DEFAULT_LOOKAHEAD,
            min_rollout_speed: None,
            max_rollout_speed: None,
            qp_tolerance: mpc.tolerance,
            qp_max_iterations: mpc.max_iterations,
            divergence_threshold: 5.0,
            max_run_time: 0.0,
            tlp_start: [-12.0, -6.0, 0.5],
            tlp_throttle: 0.6,
            tlp_amplitude: 0.3,
            tlp_period: 5.0,
            tlp_duration: 8.0,
            tlp_seed: 99,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.geometry().validate()?;
        self.controller().validate()?;
        self.planner_limits().validate()?;
        if self.throttle_levels.is_empty() || self.throttle_levels.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("throttle levels must be non-empty and within [0, 1]".into()));
        }
        if self.script_families.is_empty() || self.episodes_per_script == 0 || !(self.episode_duration > 0.0) {
            return Err(Error::Config("excitation schedule is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage_required) {
            return Err(Error::Config("coverage_required must lie in [0, 1]".into()));
        }
        if !(self.lambda >= 0.0) || !(self.w >= 0.0) || !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("lambda, w and divergence threshold must be non-negative".into()));
        }
        if !(self.sim_dt > 0.0 && self.sim_dt <= 1.0 / 30.0) {
            return Err(Error::Config("sim_dt must lie in (0, 1/30]".into()));
        }
        if !(0.0..=1.0).contains(&self.tlp_throttle) || !(self.tlp_period > 0.0 && self.tlp_duration > 0.0) {
            return Err(Error::Config("tlp reference needs throttle in [0, 1] and positive period and duration".into()));
        }
        if !(self.g_max_deg > 0.0 && self.g_max_deg < self.restrict_deg && self.restrict_deg < 90.0) {
            return Err(Error::Config("need 0 < g_max_deg < restrict_deg < 90".into()));
        }
        Ok(())
    }

    pub fn terrain_spec(&self) -> TerrainSpec {
        TerrainSpec { recipe: self.terrain.clone(), extent: self.terrain_extent, resolution: self.terrain_resolution }
    }

    pub fn g_max(&self) -> f64 {
        self.g_max_deg.to_radians().tan()
    }

    pub fn restrict_threshold(&self) -> f64 {
        self.restrict_deg.to_radians().tan()
    }

    pub fn geometry(&self) -> BinGeometry {
        BinGeometry { q: self.bins, kappa_max: self.kappa_max }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { lambda: self.lambda, augmented: self.augmented }
    }

    pub fn anchor_policy(&self) -> AnchorPolicy {
        AnchorPolicy { window: self.anchor_window, stride: self.anchor_stride, inputs: self.anchor_inputs }
    }

    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn goal_pose(&self) -> Pose2 {
        Pose2::new(self.goal[0], self.goal[1], self.goal[2])
    }

    pub fn tlp_script(&self) -> ExcitationScript {
        ExcitationScript {
            throttle: self.tlp_throttle,
            steering: SteeringExcitation::Sinusoid { amplitude: self.tlp_amplitude, period: self.tlp_period },
            duration: self.tlp_duration,
            start: Pose2::new(self.tlp_start[0], self.tlp_start[1], self.tlp_start[2]),
            recenter_margin: 0.0,
        }
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            sim_dt: self.sim_dt,
            divergence_threshold: self.divergence_threshold,
            goal_tolerance: self.planner_limits().goal_tolerance,
            max_time: self.max_run_time,
        }
    }

    pub fn planner_limits(&self) -> PlannerLimits {
        PlannerLimits { max_expansions: self.max_expansions, ..PlannerLimits::for_vehicle(&self.vehicle) }
    }

    pub fn controller(&self) -> ControllerConfig {
        let mut c = ControllerConfig::for_vehicle(&self.vehicle);
        c.mpc.horizon = self.horizon;
        c.mpc.tracking_weight = Matrix2::new(self.tracking_weight[0], 0.0, 0.0, self.tracking_weight[1]);
        c.mpc.rate_weight = Matrix2::new(self.rate_weight[0], 0.0, 0.0, self.rate_weight[1]);
        c.mpc.tolerance = self.qp_tolerance;
        c.mpc.max_iterations = self.qp_max_iterations;
        c.rollout_steps = self.rollout_steps;
        c.lookahead = self.lookahead;
        if let Some(v) = self.min_rollout_speed {
            c.min_rollout_speed = v;
        }
        if let Some(v) = self.max_rollout_speed {
            c.max_rollout_speed = v;
        }
        c
    }
}
