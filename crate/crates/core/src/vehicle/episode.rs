//! Scripted excitation episodes and the 30 Hz episode log.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{step, ControlInput, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::koopman::instantaneous_curvature;
use crate::terrain::LayerStack;

pub const LOG_RATE_HZ: f64 = 30.0;
pub const LOG_HEADER: &str = "t,x,y,yaw,v,delta,v_cmd,delta_cmd,gx,gy,kappa";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub delta: f64,
    pub v_cmd: f64,
    pub delta_cmd: f64,
    pub gx: f64,
    pub gy: f64,
    pub kappa: f64,
}

impl LogRow {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.yaw)
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteeringExcitation {
    Constant { delta: f64 },
    Sinusoid { amplitude: f64, period: f64 },
    /// Linear frequency sweep from `f_start` to `f_end` Hz over the episode.
    Chirp { amplitude: f64, f_start: f64, f_end: f64 },
    /// Uniform random steering held for a random duration.
    PiecewiseRandom { amplitude: f64, min_hold: f64, max_hold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationScript {
    /// Throttle fraction in [0, 1].
    pub throttle: f64,
    pub steering: SteeringExcitation,
    /// Episode length (s).
    pub duration: f64,
    pub start: Pose2,
    /// Width of the border band in which the script steers back toward the
    /// map centre; 0 disables.
    #[serde(default)]
    pub recenter_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    /// Set when the vehicle left the terrain before the script finished.
    pub truncated: bool,
}

struct SteeringSource {
    excitation: SteeringExcitation,
    phase: f64,
    hold_until: f64,
    held: f64,
    rng: ChaCha8Rng,
    duration: f64,
}

impl SteeringSource {
    fn new(excitation: SteeringExcitation, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random_range(0.0..2.0 * PI);
        Self { excitation, phase, hold_until: f64::NEG_INFINITY, held: 0.0, rng, duration }
    }

    fn sample(&mut self, t: f64) -> f64 {
        match self.excitation {
            SteeringExcitation::Constant { delta } => delta,
            SteeringExcitation::Sinusoid { amplitude, period } => amplitude * (2.0 * PI * t / period + self.phase).sin(),
            SteeringExcitation::Chirp { amplitude, f_start, f_end } => {
                let k = (f_end - f_start) / self.duration;
                amplitude * (2.0 * PI * (f_start * t + 0.5 * k * t * t) + self.phase).sin()
            }
            SteeringExcitation::PiecewiseRandom { amplitude, min_hold, max_hold } => {
                if t >= self.hold_until {
                    self.held = self.rng.random_range(-amplitude..=amplitude);
                    self.hold_until = t + self.rng.random_range(min_hold..=max_hold.max(min_hold));
                }
                self.held
            }
        }
    }
}

/// Steers toward the map centre while the vehicle is inside the border band,
/// releasing once it points roughly inward.
struct Recenter {
    margin: f64,
    active: bool,
    lo: Point2,
    hi: Point2,
}

impl Recenter {
    fn override_steer(&mut self, st: &VehicleState, delta_lim: f64) -> Option<f64> {
        if self.margin <= 0.0 {
            return None;
        }
        let p = st.position();
        let near_edge = p.x - self.lo.x < self.margin
            || self.hi.x - p.x < self.margin
            || p.y - self.lo.y < self.margin
            || self.hi.y - p.y < self.margin;
        let centre = 0.5 * (self.lo + self.hi);
        let to_centre = centre - p;
        let bearing = wrap_angle(to_centre.y.atan2(to_centre.x) - st.yaw);
        if near_edge && bearing.abs() > PI / 4.0 {
            self.active = true;
        }
        if self.active && bearing.abs() < PI / 8.0 {
            self.active = false;
        }
        self.active.then(|| delta_lim * bearing.signum())
    }
}

/// Runs one scripted episode and logs it at 30 Hz.
pub fn collect_episode(
    script: &ExcitationScript,
    stack: &LayerStack,
    params: &VehicleParams,
    dt: f64,
    seed: u64,
) -> Result<EpisodeLog> {
    params.validate()?;
    if !(script.duration > 0.0) {
        return Err(Error::Parameter("episode duration must be positive".into()));
    }
    let tick = 1.0 / LOG_RATE_HZ;
    let substeps = (tick / dt).round().max(1.0) as usize;
    if ((tick / substeps as f64) - dt).abs() > 1e-9 {
        return Err(Error::Parameter(format!("dt {dt} does not divide the 30 Hz log period")));
    }
    let v_cmd = ControlInput::from_throttle(script.throttle, 0.0, params)?.v_cmd;
    let mut steer = SteeringSource::new(script.steering.clone(), script.duration, seed);
    let mut recenter = Recenter {
        margin: script.recenter_margin,
        active: false,
        lo: Point2::from(stack.height.origin()),
        hi: stack.height.max_corner(),
    };

    let mut st = VehicleState::at_rest(script.start);
    let ticks = (script.duration * LOG_RATE_HZ).round() as usize;
    let mut rows = Vec::with_capacity(ticks + 1);
    let mut truncated = false;
    for k in 0..=ticks {
        let t = k as f64 * tick;
        let scripted = steer.sample(t).clamp(-params.delta_lim, params.delta_lim);
        let delta_cmd = recenter.override_steer(&st, params.delta_lim).unwrap_or(scripted);
        let (gx, gy) = stack.gradient_at(st.position())?;
        rows.push(LogRow {
            t,
            x: st.x,
            y: st.y,
            yaw: st.yaw,
            v: st.v,
            delta: st.delta,
            v_cmd,
            delta_cmd,
            gx,
            gy,
            kappa: 0.0,
        });
        if k == ticks {
            break;
        }
        let u = ControlInput::new(v_cmd, delta_cmd);
        let mut next = st;
        let mut left = false;
        for _ in 0..substeps {
            match step(&next, &u, stack, params, dt) {
                Ok(s) => next = s,
                Err(Error::OutOfBounds(_)) => {
                    left = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if left {
            truncated = true;
            break;
        }
        next.t = (k + 1) as f64 * tick;
        st = next;
    }
    if rows.len() >= 3 {
        if let Ok(kappa) = instantaneous_curvature(&rows) {
            for (row, k) in rows.iter_mut().zip(kappa) {
                row.kappa = k;
            }
        }
    }
    Ok(EpisodeLog { rows, truncated })
}

pub fn write_episode_csv(rows: &[LogRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_csv(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != LOG_HEADER {
        return Err(Error::Format(format!("episode log header {:?} != {LOG_HEADER:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
