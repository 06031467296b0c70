use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ScriptFamily};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::koopman::{assign_bin, BinGeometry};
use crate::terrain::LayerStack;
use crate::vehicle::{collect_episode, read_episode_csv, write_episode_csv, EpisodeLog, ExcitationScript, LogRow, SteeringExcitation};

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledEpisode {
    pub name: String,
    pub script: ExcitationScript,
    pub seed: u64,
}

pub(crate) fn derive_seed(base: u64, index: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9)).rotate_left(17)
}

fn steering_for(family: ScriptFamily, delta_lim: f64) -> SteeringExcitation {
    match family {
        ScriptFamily::Sweep => SteeringExcitation::Chirp { amplitude: delta_lim, f_start: 0.02, f_end: 0.4 },
        ScriptFamily::Random => SteeringExcitation::PiecewiseRandom { amplitude: delta_lim, min_hold: 0.5, max_hold: 3.0 },
    }
}

/// Every (family, throttle, repetition) combination with its own start pose and seed.
pub fn excitation_schedule(cfg: &ExperimentConfig) -> Vec<ScheduledEpisode> {
    let mut out = Vec::new();
    let half = 0.25 * cfg.terrain_extent;
    for family in &cfg.script_families {
        for (level, throttle) in cfg.throttle_levels.iter().enumerate() {
            for rep in 0..cfg.episodes_per_script {
                let index = out.len() as u64;
                let seed = derive_seed(cfg.seed, index);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let start = Pose2::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
                let tag = match family {
                    ScriptFamily::Sweep => "sweep",
                    ScriptFamily::Random => "random",
                };
                out.push(ScheduledEpisode {
                    name: format!("episode_{index:03}_{tag}_t{level}_r{rep}"),
                    script: ExcitationScript {
                        throttle: *throttle,
                        steering: steering_for(*family, cfg.vehicle.delta_lim),
                        duration: cfg.episode_duration,
                        start,
                        recenter_margin: cfg.recenter_margin,
                    },
                    seed,
                });
            }
        }
    }
    out
}

/// Runs the schedule in parallel; output order follows the schedule.
pub fn collect_dataset(cfg: &ExperimentConfig, stack: &LayerStack) -> Result<Vec<(ScheduledEpisode, EpisodeLog)>> {
    excitation_schedule(cfg)
        .into_par_iter()
        .map(|ep| {
            let log = collect_episode(&ep.script, stack, &cfg.vehicle, cfg.sim_dt, ep.seed)?;
            Ok((ep, log))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Log rows per curvature bin.
    pub counts: Vec<usize>,
    /// Share of all rows falling in each bin.
    pub fractions: Vec<f64>,
    /// Fraction of bins with at least `floor` rows.
    pub covered_fraction: f64,
    pub floor: usize,
    pub required: f64,
    pub passed: bool,
}

pub fn coverage_report(logs: &[Vec<LogRow>], geom: &BinGeometry, floor: usize, required: f64) -> Result<CoverageReport> {
    geom.validate()?;
    let mut counts = vec![0usize; geom.q];
    for row in logs.iter().flatten() {
        counts[assign_bin(row.kappa, geom)] += 1;
    }
    let total: usize = counts.iter().sum();
    let fractions = counts.iter().map(|c| if total == 0 { 0.0 } else { *c as f64 / total as f64 }).collect();
    let covered_fraction = counts.iter().filter(|c| **c >= floor).count() as f64 / geom.q as f64;
    Ok(CoverageReport { counts, fractions, covered_fraction, floor, required, passed: covered_fraction >= required })
}

pub const COVERAGE_FILE: &str = "coverage.json";

pub fn write_dataset(dir: impl AsRef<Path>, episodes: &[(ScheduledEpisode, EpisodeLog)], coverage: &CoverageReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (ep, log) in episodes {
        write_episode_csv(&log.rows, dir.join(format!("{}.csv", ep.name)))?;
    }
    std::fs::write(dir.join(COVERAGE_FILE), serde_json::to_string_pretty(coverage)? + "\n")?;
    Ok(())
}

/// Episode CSVs of a dataset directory in file-name order.
pub fn dataset_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Coverage(format!("no episode logs in {}", dir.display())));
    }
    Ok(files)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<Vec<LogRow>>> {
    dataset_files(dir)?.iter().map(read_episode_csv).collect()
}
