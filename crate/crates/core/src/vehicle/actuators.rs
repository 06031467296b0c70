use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::VehicleParams;
use crate::error::{Error, Result};

/// Left and right wheel angles for a bicycle steering angle `delta`.
/// The inner wheel gets the larger magnitude.
pub fn ackermann_split(delta: f64, wheelbase: f64, track_width: f64) -> Result<(f64, f64)> {
    if !(delta.abs() < FRAC_PI_2) {
        return Err(Error::Domain(format!("steering angle {delta} must satisfy |delta| < pi/2")));
    }
    let t = delta.tan();
    let two_l = 2.0 * wheelbase;
    let left = (two_l * t / (two_l - track_width * t)).atan();
    let right = (two_l * t / (two_l + track_width * t)).atan();
    Ok((left, right))
}

/// Moves the actual steering angle toward the command at the speed-dependent
/// rate limit, never past the command or the steering limit.
pub fn steering_step(delta_actual: f64, delta_cmd: f64, v: f64, params: &VehicleParams, dt: f64) -> f64 {
    let lim = params.delta_lim;
    let target = delta_cmd.clamp(-lim, lim);
    let max_step = params.steer_rate(v.abs()) * dt;
    let err = target - delta_actual;
    (delta_actual + err.clamp(-max_step, max_step)).clamp(-lim, lim)
}

/// Two-piece cubic friction curve: rises from `(s0, f0)` to the extremum
/// `(se, fe)`, then eases to the asymptote `(sa, fa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireSpline {
    pub s0: f64,
    pub f0: f64,
    pub se: f64,
    pub fe: f64,
    pub sa: f64,
    pub fa: f64,
}

impl Default for TireSpline {
    fn default() -> Self {
        Self { s0: 0.0, f0: 0.0, se: 0.25, fe: 1.0, sa: 0.6, fa: 0.75 }
    }
}

fn hermite_slope(t: f64, p0: f64, m0: f64, p1: f64, m1: f64, h: f64) -> f64 {
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * p0 + (3.0 * t2 - 4.0 * t + 1.0) * h * m0 + (-6.0 * t2 + 6.0 * t) * p1 + (3.0 * t2 - 2.0 * t) * h * m1) / h
}

fn hermite(t: f64, p0: f64, m0: f64, p1: f64, m1: f64, h: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * h * m1
}

impl TireSpline {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 < self.se && self.se < self.sa) {
            return Err(Error::Parameter("tire spline needs s0 < se < sa".into()));
        }
        Ok(())
    }

    /// Slope at the origin anchor; makes the first segment the monotone
    /// quadratic through both anchors.
    fn initial_slope(&self) -> f64 {
        2.0 * (self.fe - self.f0) / (self.se - self.s0)
    }

    pub fn force(&self, s: f64) -> f64 {
        if s <= self.s0 {
            self.f0
        } else if s < self.se {
            let h = self.se - self.s0;
            hermite((s - self.s0) / h, self.f0, self.initial_slope(), self.fe, 0.0, h)
        } else if s < self.sa {
            let h = self.sa - self.se;
            hermite((s - self.se) / h, self.fe, 0.0, self.fa, 0.0, h)
        } else {
            self.fa
        }
    }

    /// dF/dS; one-sided from the right at the knots.
    pub fn slope(&self, s: f64) -> f64 {
        if s < self.s0 || s >= self.sa {
            0.0
        } else if s < self.se {
            let h = self.se - self.s0;
            hermite_slope((s - self.s0) / h, self.f0, self.initial_slope(), self.fe, 0.0, h)
        } else {
            let h = self.sa - self.se;
            hermite_slope((s - self.se) / h, self.fe, 0.0, self.fa, 0.0, h)
        }
    }

    /// Slope approaching `s` from below.
    pub fn slope_left(&self, s: f64) -> f64 {
        if s <= self.s0 || s > self.sa {
            0.0
        } else if s <= self.se {
            let h = self.se - self.s0;
            hermite_slope((s - self.s0) / h, self.f0, self.initial_slope(), self.fe, 0.0, h)
        } else {
            let h = self.sa - self.se;
            hermite_slope((s - self.se) / h, self.fe, 0.0, self.fa, 0.0, h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_wheels_for_zero_steer() {
        assert_eq!(ackermann_split(0.0, 0.55, 0.4).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn inner_wheel_turns_more() {
        let (delta, l, w) = (0.2f64, 0.55, 0.4);
        let (left, right) = ackermann_split(delta, l, w).unwrap();
        // direct formula evaluation
        let t = delta.tan();
        let expect_left = (2.0 * l * t / (2.0 * l - w * t)).atan();
        let expect_right = (2.0 * l * t / (2.0 * l + w * t)).atan();
        assert!((left - expect_left).abs() < 1e-15);
        assert!((right - expect_right).abs() < 1e-15);
        assert!(left.abs() > delta.abs() && delta.abs() > right.abs());
        let (nl, nr) = ackermann_split(-delta, l, w).unwrap();
        assert!((nl + right).abs() < 1e-15 && (nr + left).abs() < 1e-15);
    }

    #[test]
    fn ackermann_degenerates_for_zero_track() {
        for delta in [-1.2, -0.3, 0.1, 0.9] {
            let (l, r) = ackermann_split(delta, 0.55, 1e-9).unwrap();
            assert!((l - delta).abs() < 1e-6 && (r - delta).abs() < 1e-6);
        }
    }

    #[test]
    fn ackermann_domain_error() {
        assert!(matches!(ackermann_split(FRAC_PI_2, 0.55, 0.4), Err(Error::Domain(_))));
    }

    #[test]
    fn steering_rate_limit() {
        let p = VehicleParams::default();
        assert_eq!(steering_step(0.1, 0.1, 2.0, &p, 0.05), 0.1);
        let dt = 1e-3;
        let moved = steering_step(0.0, 0.3, 2.4, &p, dt);
        assert!((moved - p.steer_rate(2.4) * dt).abs() < 1e-15);
        let mut d = 0.0;
        for _ in 0..200 {
            d = steering_step(d, 1.0, 1.0, &p, 0.05);
            assert!(d <= p.delta_lim);
        }
        assert_eq!(d, p.delta_lim);
        // no overshoot
        assert_eq!(steering_step(0.0, 0.001, 1.0, &p, 0.1), 0.001);
    }

    #[test]
    fn tire_spline_anchors_and_extremum() {
        let s = TireSpline::default();
        assert_eq!(s.force(s.s0), s.f0);
        assert!((s.force(s.se) - s.fe).abs() < 1e-15);
        assert_eq!(s.force(s.sa + 1.0), s.fa);
        assert!(s.slope_left(s.se).abs() < 1e-9 && s.slope(s.se).abs() < 1e-9);
        assert!((s.force(s.se - 1e-12) - s.force(s.se + 1e-12)).abs() < 1e-9);
        // analytic slope agrees with central differences away from the knots
        for x in [0.05, 0.2, 0.3, 0.5] {
            let h = 1e-6;
            let fd = (s.force(x + h) - s.force(x - h)) / (2.0 * h);
            assert!((fd - s.slope(x)).abs() < 1e-6);
        }
        // asymptote is reached flat
        assert!(s.slope_left(s.sa).abs() < 1e-9);
    }

    #[test]
    fn tire_spline_midpoint_matches_hermite_oracle() {
        let s = TireSpline::default();
        let mid = 0.5 * (s.s0 + s.se);
        // Hermite basis at t = 1/2: h00 = h01 = 1/2, h10 = 1/8, h11 = -1/8
        let h = s.se - s.s0;
        let m0 = 2.0 * (s.fe - s.f0) / h;
        let oracle = 0.5 * s.f0 + 0.125 * h * m0 + 0.5 * s.fe;
        assert!((s.force(mid) - oracle).abs() < 1e-15);
    }
}
