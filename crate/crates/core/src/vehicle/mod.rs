//! Ground-truth vehicle simulator: kinematic bicycle, rate-limited steering,
//! two-piece tire friction spline and terrain-gradient coupling.

mod actuators;
mod episode;
mod sim;

pub use actuators::{ackermann_split, steering_step, TireSpline};
pub use episode::{
    collect_episode, read_episode_csv, write_episode_csv, EpisodeLog, ExcitationScript, LogRow, SteeringExcitation,
    LOG_HEADER, LOG_RATE_HZ,
};
pub use sim::step;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, Point2};

pub const GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Wheelbase (m).
    pub wheelbase: f64,
    /// Track width (m).
    pub track_width: f64,
    pub v_max: f64,
    /// Steering limit (rad).
    pub delta_lim: f64,
    /// Base steering rate (rad/s).
    pub steer_sensitivity: f64,
    /// Additional steering rate at full speed (rad/s).
    pub steer_speed_factor: f64,
    pub mass: f64,
    /// Scales the along-heading gravity component into deceleration.
    pub gravity_coupling: f64,
    /// Scales tire-limited lateral slide on side slopes.
    pub lateral_coupling: f64,
    /// First-order speed lag (s).
    pub speed_time_constant: f64,
    pub tire: TireSpline,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let speed_time_constant = 0.3;
        let v_max = 4.8;
        Self {
            wheelbase: 0.55,
            track_width: 0.4,
            v_max,
            delta_lim: 0.35,
            steer_sensitivity: 1.0,
            steer_speed_factor: 0.5,
            mass: 45.0,
            gravity_coupling: calibrated_gravity_coupling(0.5 * v_max, speed_time_constant),
            lateral_coupling: 1.0,
            speed_time_constant,
            tire: TireSpline::default(),
        }
    }
}

/// Coupling such that a 15 degree climb at `v_ref` loses 20% of steady-state speed.
pub fn calibrated_gravity_coupling(v_ref: f64, speed_time_constant: f64) -> f64 {
    0.2 * v_ref / (speed_time_constant * GRAVITY * 15f64.to_radians().tan())
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wheelbase > 0.0 && self.track_width > 0.0 && self.v_max > 0.0) {
            return Err(Error::Parameter("wheelbase, track width and v_max must be positive".into()));
        }
        if !(self.delta_lim > 0.0 && self.delta_lim < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Parameter(format!("delta_lim {} outside (0, pi/2)", self.delta_lim)));
        }
        if !(self.speed_time_constant > 0.0) || self.steer_sensitivity < 0.0 || self.steer_speed_factor < 0.0 {
            return Err(Error::Parameter("actuator constants must be non-negative".into()));
        }
        self.tire.validate()
    }

    /// Largest path curvature the steering can hold (1/m).
    pub fn max_curvature(&self) -> f64 {
        self.delta_lim.tan() / self.wheelbase
    }

    pub fn steer_rate(&self, v: f64) -> f64 {
        self.steer_sensitivity + self.steer_speed_factor * v / self.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    /// Actual (rate-limited) steering angle.
    pub delta: f64,
    pub t: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self { x: pose.x, y: pose.y, yaw: pose.yaw, v: 0.0, delta: 0.0, t: 0.0 }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.yaw)
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Speed and steering command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v_cmd: f64,
    pub delta_cmd: f64,
}

impl ControlInput {
    pub fn new(v_cmd: f64, delta_cmd: f64) -> Self {
        Self { v_cmd, delta_cmd }
    }

    pub fn stop() -> Self {
        Self { v_cmd: 0.0, delta_cmd: 0.0 }
    }

    /// Throttle fraction mapped onto a speed command.
    pub fn from_throttle(throttle: f64, delta_cmd: f64, params: &VehicleParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&throttle) {
            return Err(Error::Parameter(format!("throttle {throttle} outside [0, 1]")));
        }
        Ok(Self { v_cmd: throttle * params.v_max, delta_cmd })
    }
}
