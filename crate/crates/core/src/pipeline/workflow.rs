//! File layout and the batch steps behind each CLI subcommand.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::collect::{collect_dataset, coverage_report, write_dataset, CoverageReport};
use super::config::ExperimentConfig;
use super::metrics::{EvalReport, RunMetadata};
use super::run::{run_closed_loop, RunResult, CONTROLLER_LOG_HEADER};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::koopman::{build_snapshots, fit_family, BinFitReport, ModelFamily};
use crate::planner::{plan, read_plan_csv, MissionPlan, PlannerMode, PLAN_HEADER};
use crate::terrain::{build_layer_stack, generate_synthetic_terrain, read_dem, write_dem_binary, write_dem_csv, HeightGrid, LayerStack};
use crate::vehicle::{collect_episode, read_episode_csv, LogRow, LOG_HEADER};

pub const TERRAIN_FILE: &str = "terrain.dem";
pub const TERRAIN_CSV_FILE: &str = "terrain.csv";
pub const DATASET_DIR: &str = "dataset";
pub const MODEL_FILE: &str = "model.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const PLAN_FILE: &str = "plan.csv";
pub const TLP_FILE: &str = "tlp_reference.csv";
pub const CONTROLLER_LOG_FILE: &str = "controller_log.csv";
pub const EVAL_FILE: &str = "eval.json";

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn synthesize_terrain(cfg: &ExperimentConfig) -> Result<HeightGrid> {
    generate_synthetic_terrain(&cfg.terrain_spec(), cfg.seed)
}

/// Writes the binary DEM and its CSV twin into `dir`; returns the binary path.
pub fn write_terrain(grid: &HeightGrid, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let bin = dir.join(TERRAIN_FILE);
    let mut w = BufWriter::new(File::create(&bin)?);
    write_dem_binary(grid, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(TERRAIN_CSV_FILE))?);
    write_dem_csv(grid, &mut w)?;
    w.flush()?;
    Ok(bin)
}

/// Layer stack from a DEM file when given, otherwise from the configured recipe.
pub fn load_stack(cfg: &ExperimentConfig, terrain: Option<&Path>) -> Result<LayerStack> {
    let grid = match terrain {
        Some(p) => read_dem(p)?,
        None => synthesize_terrain(cfg)?,
    };
    build_layer_stack(grid, &cfg.obstacles, cfg.g_max(), cfg.restrict_threshold())
}

/// Runs the excitation schedule and writes the episode logs and coverage report
/// into `dir`. The caller decides what a failed coverage audit means.
pub fn collect(cfg: &ExperimentConfig, stack: &LayerStack, dir: impl AsRef<Path>) -> Result<CoverageReport> {
    let episodes = collect_dataset(cfg, stack)?;
    let logs: Vec<Vec<LogRow>> = episodes.iter().map(|(_, log)| log.rows.clone()).collect();
    let coverage = coverage_report(&logs, &cfg.geometry(), cfg.coverage_floor, cfg.coverage_required)?;
    write_dataset(dir, &episodes, &coverage)?;
    Ok(coverage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub augmented: bool,
    pub lambda: f64,
    pub episodes: usize,
    /// Training pairs per bin over all pairs.
    pub sample_fractions: Vec<f64>,
    pub coverage: CoverageReport,
    pub bins: Vec<BinFitReport>,
    pub warnings: Vec<String>,
}

/// Audits the logs, builds anchored snapshots and fits the model family.
///
/// Without `force`, a failed coverage audit or a bin without training pairs is
/// refused with [`Error::Coverage`].
pub fn train(cfg: &ExperimentConfig, logs: &[Vec<LogRow>], force: bool) -> Result<(ModelFamily, FitReport)> {
    let geom = cfg.geometry();
    let coverage = coverage_report(logs, &geom, cfg.coverage_floor, cfg.coverage_required)?;
    if !coverage.passed && !force {
        return Err(Error::Coverage(format!(
            "{:.0}% of curvature bins have {} samples, {:.0}% required (use --force to train anyway)",
            100.0 * coverage.covered_fraction,
            coverage.floor,
            100.0 * coverage.required
        )));
    }
    let dataset = build_snapshots(logs, cfg.anchor_policy(), &geom)?;
    if let Some(empty) = dataset.bins.iter().position(|b| b.is_empty()) {
        if !force {
            return Err(Error::Coverage(format!("curvature bin {empty} has no training pairs (use --force to train anyway)")));
        }
    }
    let (family, bins) = fit_family(&dataset, &cfg.fit_options())?;
    let total: usize = dataset.bins.iter().map(|b| b.len()).sum();
    let sample_fractions = dataset.bins.iter().map(|b| if total == 0 { 0.0 } else { b.len() as f64 / total as f64 }).collect();
    let report = FitReport {
        seed: cfg.seed,
        augmented: cfg.augmented,
        lambda: cfg.lambda,
        episodes: logs.len(),
        sample_fractions,
        coverage,
        bins,
        warnings: dataset.warnings.clone(),
    };
    Ok((family, report))
}

pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// A planned mission or the held-out aggressive reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mission {
    Planned(PlannerMode),
    Tlp,
}

impl Mission {
    pub const ALL: [Mission; 5] = [
        Mission::Planned(PlannerMode::Default),
        Mission::Planned(PlannerMode::ElevationAware),
        Mission::Planned(PlannerMode::GradientAware),
        Mission::Planned(PlannerMode::RolloverAware),
        Mission::Tlp,
    ];
}

impl fmt::Display for Mission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mission::Planned(m) => write!(f, "{m}"),
            Mission::Tlp => f.write_str("tlp"),
        }
    }
}

impl FromStr for Mission {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("tlp") {
            return Ok(Mission::Tlp);
        }
        s.parse().map(Mission::Planned)
    }
}

pub fn plan_mission(cfg: &ExperimentConfig, stack: &LayerStack, mode: PlannerMode) -> Result<MissionPlan> {
    plan(stack, &cfg.start_pose(), &cfg.goal_pose(), mode, cfg.w, &cfg.planner_limits())
}

/// Drives the scripted aggressive run that serves as the held-out reference.
pub fn tlp_reference(cfg: &ExperimentConfig, stack: &LayerStack) -> Result<Vec<LogRow>> {
    let log = collect_episode(&cfg.tlp_script(), stack, &cfg.vehicle, cfg.sim_dt, cfg.tlp_seed)?;
    if log.truncated {
        return Err(Error::Config("tlp reference leaves the terrain; move tlp_start or shorten tlp_duration".into()));
    }
    Ok(log.rows)
}

/// A path to track and the pose the vehicle starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub points: Vec<Point2>,
    pub start: Pose2,
}

impl Reference {
    pub fn from_plan(plan: &MissionPlan) -> Self {
        Self { points: plan.points(), start: plan.poses[0] }
    }

    pub fn from_log(rows: &[LogRow]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Length("reference log is empty".into()))?;
        Ok(Self { points: rows.iter().map(LogRow::position).collect(), start: first.pose() })
    }
}

fn first_line(path: &Path) -> Result<String> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(line.trim_end().to_owned())
}

/// Reads a plan CSV, an episode log or a controller log as a reference path.
pub fn read_reference(path: impl AsRef<Path>) -> Result<Reference> {
    let path = path.as_ref();
    let header = first_line(path)?;
    let r = if header == PLAN_HEADER.join(",") {
        let (poses, _) = read_plan_csv(BufReader::new(File::open(path)?))?;
        let start = *poses.first().ok_or_else(|| Error::Length("reference plan is empty".into()))?;
        Reference { points: poses.iter().map(|p| p.position()).collect(), start }
    } else if header == LOG_HEADER {
        Reference::from_log(&read_episode_csv(path)?)?
    } else if header == CONTROLLER_LOG_HEADER {
        let rows = super::run::read_controller_log(path)?;
        let first = rows.first().ok_or_else(|| Error::Length("reference log is empty".into()))?;
        Reference { points: rows.iter().map(|r| Point2::new(r.x, r.y)).collect(), start: Pose2::new(first.x, first.y, first.yaw) }
    } else {
        return Err(Error::Format(format!("{}: unrecognized reference header {header:?}", path.display())));
    };
    if r.points.is_empty() {
        return Err(Error::Length(format!("{}: reference is empty", path.display())));
    }
    Ok(r)
}

/// Closed loop along `reference`; `coverage` is copied into the report.
pub fn run_reference(
    cfg: &ExperimentConfig,
    family: &ModelFamily,
    stack: &LayerStack,
    reference: &Reference,
    mission: &str,
    coverage: Vec<f64>,
) -> Result<RunResult> {
    let metadata = RunMetadata { mission: mission.to_owned(), seed: cfg.seed, ..RunMetadata::default() };
    let mut result = run_closed_loop(family, stack, &reference.points, reference.start, &cfg.controller(), &cfg.run_settings(), metadata)?;
    result.report.bin_coverage = coverage;
    Ok(result)
}

/// Reference for a mission: a fresh plan, or the aggressive scripted run.
pub fn mission_reference(cfg: &ExperimentConfig, stack: &LayerStack, mission: Mission) -> Result<(Reference, Option<MissionPlan>, Option<Vec<LogRow>>)> {
    match mission {
        Mission::Planned(mode) => {
            let p = plan_mission(cfg, stack, mode)?;
            Ok((Reference::from_plan(&p), Some(p), None))
        }
        Mission::Tlp => {
            let rows = tlp_reference(cfg, stack)?;
            Ok((Reference::from_log(&rows)?, None, Some(rows)))
        }
    }
}

/// Scores a controller log against a reference path.
///
/// Completion means the last logged position is within `goal_tolerance` of the
/// reference end; divergence means some position exceeded `divergence_threshold`.
pub fn evaluate_log(
    log: &[super::run::ControllerLogRow],
    reference: &[Point2],
    goal_tolerance: f64,
    divergence_threshold: f64,
    metadata: RunMetadata,
) -> Result<EvalReport> {
    if log.is_empty() || reference.is_empty() {
        return Err(Error::Length("evaluation needs a non-empty run log and reference".into()));
    }
    let executed: Vec<Point2> = log.iter().map(|r| Point2::new(r.x, r.y)).collect();
    let end = *reference.last().expect("non-empty");
    let mut report = EvalReport::from_paths(&executed, reference, false, false, metadata)?;
    report.diverged = report.max_cross_track > divergence_threshold;
    report.completed = !report.diverged && (executed.last().expect("non-empty") - end).norm() <= goal_tolerance;
    Ok(report)
}
