use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{EvalReport, RunMetadata};
use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, Point2, Pose2};
use crate::koopman::ModelFamily;
use crate::local::ReferencePath;
use crate::mpc::{ControllerConfig, TrackingController};
use crate::terrain::LayerStack;
use crate::vehicle::{step, VehicleState, LOG_RATE_HZ};

pub const CONTROLLER_LOG_HEADER: &str = "t,x,y,yaw,v_cmd,delta_cmd,phi,cte,qp_iters,qp_residual";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerLogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v_cmd: f64,
    pub delta_cmd: f64,
    /// Selected bin, -1 for a stop command.
    pub phi: i64,
    pub cte: f64,
    pub qp_iters: usize,
    pub qp_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub sim_dt: f64,
    pub divergence_threshold: f64,
    pub goal_tolerance: f64,
    /// 0 derives the limit from the reference length.
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub log: Vec<ControllerLogRow>,
    pub report: EvalReport,
    pub final_state: VehicleState,
}

/// Drives the simulated vehicle along `reference` from `start` at 30 Hz until
/// it reaches the end, diverges, leaves the map or runs out of time.
///
/// The log holds one row per control tick plus a final stop row at the pose
/// where the run ended.
pub fn run_closed_loop(
    family: &ModelFamily,
    stack: &LayerStack,
    reference: &[Point2],
    start: Pose2,
    cfg: &ControllerConfig,
    settings: &RunSettings,
    mut metadata: RunMetadata,
) -> Result<RunResult> {
    let path = ReferencePath::new(reference.to_vec())?;
    let mut ctrl = TrackingController::new(family, path.clone(), cfg.clone())?;
    let tick = 1.0 / LOG_RATE_HZ;
    let substeps = (tick / settings.sim_dt).round().max(1.0) as usize;
    let dt = tick / substeps as f64;
    let max_time = if settings.max_time > 0.0 {
        settings.max_time
    } else {
        20.0 + 4.0 * path.length() / cfg.min_rollout_speed.max(0.25 * cfg.vehicle.v_max)
    };
    let mut st = VehicleState::at_rest(start);
    let mut log = Vec::new();
    let mut executed = Vec::new();
    let (mut completed, mut diverged) = (false, false);
    let mut ticks = 0usize;
    loop {
        let p = st.position();
        executed.push(p);
        if point_polyline_distance(p, path.points()) > settings.divergence_threshold {
            diverged = true;
            metadata.notes.push(format!("diverged at t = {:.2} s", st.t));
            break;
        }
        if (p - path.end()).norm() <= settings.goal_tolerance && ctrl.progress() >= path.length() - 2.0 * settings.goal_tolerance {
            completed = true;
            break;
        }
        if st.t >= max_time {
            metadata.notes.push(format!("time limit of {max_time:.1} s reached"));
            break;
        }
        let out = ctrl.step(&st.pose(), stack)?;
        log.push(ControllerLogRow {
            t: st.t,
            x: st.x,
            y: st.y,
            yaw: st.yaw,
            v_cmd: out.input.v_cmd,
            delta_cmd: out.input.delta_cmd,
            phi: out.phi.map_or(-1, |b| b as i64),
            cte: out.cte,
            qp_iters: out.qp_iterations,
            qp_residual: out.qp_residual,
        });
        let t_next = st.t + tick;
        let mut next = st;
        let mut left = false;
        for _ in 0..substeps {
            match step(&next, &out.input, stack, &cfg.vehicle, dt) {
                Ok(s) => next = s,
                Err(Error::OutOfBounds(_)) => {
                    left = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        ticks += 1;
        if left {
            metadata.notes.push(format!("left the terrain at t = {:.2} s", st.t));
            break;
        }
        next.t = ticks as f64 * tick;
        debug_assert!((next.t - t_next).abs() < 1e-9);
        st = next;
    }
    // terminal stop command at the final pose, so the log covers every executed point
    log.push(ControllerLogRow {
        t: st.t,
        x: st.x,
        y: st.y,
        yaw: st.yaw,
        v_cmd: 0.0,
        delta_cmd: 0.0,
        phi: -1,
        cte: point_polyline_distance(st.position(), path.points()),
        qp_iters: 0,
        qp_residual: 0.0,
    });
    metadata.duration = st.t;
    metadata.ticks = ticks;
    let report = EvalReport::from_paths(&executed, path.points(), completed, diverged, metadata)?;
    Ok(RunResult { log, report, final_state: st })
}

pub fn write_controller_log(rows: &[ControllerLogRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_controller_log(path: impl AsRef<Path>) -> Result<Vec<ControllerLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>().join(",") != CONTROLLER_LOG_HEADER {
        return Err(Error::Format(format!("controller log header must be {CONTROLLER_LOG_HEADER}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
