use super::{steering_step, ControlInput, VehicleParams, VehicleState, GRAVITY};
use crate::error::{Error, Result};
use crate::terrain::LayerStack;

#[derive(Clone, Copy)]
struct Deriv {
    x: f64,
    y: f64,
    yaw: f64,
    v: f64,
}

/// Continuous-time planar dynamics with the steering angle and the world-frame
/// terrain gradient held fixed over the step.
fn dynamics(yaw: f64, v: f64, delta: f64, v_cmd: f64, grad: (f64, f64), p: &VehicleParams) -> Deriv {
    let (s, c) = yaw.sin_cos();
    let mut lateral = 0.0;
    let mut v_dot = (v_cmd - v) / p.speed_time_constant;
    if grad != (0.0, 0.0) {
        let along = grad.0 * c + grad.1 * s;
        let perp = -grad.0 * s + grad.1 * c;
        v_dot -= GRAVITY * p.gravity_coupling * along;
        // slides downhill, i.e. opposite the rising side
        lateral = -perp * p.lateral_coupling * v * p.tire.force(perp.abs());
    }
    Deriv {
        x: v * c - lateral * s,
        y: v * s + lateral * c,
        yaw: v * delta.tan() / p.wheelbase,
        v: v_dot,
    }
}

/// Advances the simulator by `dt` with explicit RK4.
///
/// Returns [`Error::OutOfBounds`] when the start or end position leaves the
/// terrain; callers treat that as episode termination.
pub fn step(state: &VehicleState, u: &ControlInput, stack: &LayerStack, p: &VehicleParams, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Parameter(format!("dt {dt} outside (0, 0.1]")));
    }
    let grad = stack.gradient_at(state.position())?;
    let v_cmd = u.v_cmd.clamp(0.0, p.v_max);
    let delta = steering_step(state.delta, u.delta_cmd, state.v, p, dt);

    let f = |yaw: f64, v: f64| dynamics(yaw, v, delta, v_cmd, grad, p);
    let k1 = f(state.yaw, state.v);
    let k2 = f(state.yaw + 0.5 * dt * k1.yaw, state.v + 0.5 * dt * k1.v);
    let k3 = f(state.yaw + 0.5 * dt * k2.yaw, state.v + 0.5 * dt * k2.v);
    let k4 = f(state.yaw + dt * k3.yaw, state.v + dt * k3.v);
    let comb = |a: f64, b: f64, c: f64, d: f64| dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);

    let next = VehicleState {
        x: state.x + comb(k1.x, k2.x, k3.x, k4.x),
        y: state.y + comb(k1.y, k2.y, k3.y, k4.y),
        yaw: crate::geometry::wrap_angle(state.yaw + comb(k1.yaw, k2.yaw, k3.yaw, k4.yaw)),
        v: (state.v + comb(k1.v, k2.v, k3.v, k4.v)).clamp(0.0, p.v_max),
        delta,
        t: state.t + dt,
    };
    if !stack.contains(next.position()) {
        return Err(Error::OutOfBounds(format!(
            "vehicle left terrain at ({:.2}, {:.2})",
            next.x, next.y
        )));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::terrain::{build_layer_stack, default_g_max, default_restrict_threshold, generate_synthetic_terrain, TerrainRecipe, TerrainSpec};

    fn stack(recipe: TerrainRecipe) -> LayerStack {
        let mut spec = TerrainSpec::new(recipe);
        spec.extent = 60.0;
        let h = generate_synthetic_terrain(&spec, 0).unwrap();
        build_layer_stack(h, &[], default_g_max(), default_restrict_threshold()).unwrap()
    }

    const DT: f64 = 1.0 / 30.0;

    #[test]
    fn straight_line_on_flat() {
        let s = stack(TerrainRecipe::Flat);
        let p = VehicleParams::default();
        let mut st = VehicleState { v: 2.0, ..VehicleState::at_rest(Pose2::new(-10.0, 1.0, 0.4)) };
        let u = ControlInput::new(2.0, 0.0);
        for _ in 0..90 {
            st = step(&st, &u, &s, &p, DT).unwrap();
        }
        assert_eq!(st.yaw, 0.4);
        assert!((st.v - 2.0).abs() < 1e-12);
        let travelled = ((st.x + 10.0).powi(2) + (st.y - 1.0).powi(2)).sqrt();
        assert!((travelled - 6.0).abs() < 1e-9);
        // stays on the heading line
        assert!(((st.y - 1.0) - 0.4f64.tan() * (st.x + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn constant_steer_traces_closed_form_circle() {
        let s = stack(TerrainRecipe::Flat);
        let p = VehicleParams::default();
        let delta = 0.3f64;
        let radius = p.wheelbase / delta.tan();
        let v = 1.5;
        let mut st = VehicleState { x: 0.0, y: 0.0, yaw: 0.0, v, delta, t: 0.0 };
        let u = ControlInput::new(v, delta);
        let period = 2.0 * std::f64::consts::PI * radius / v;
        let steps = (period / DT).ceil() as usize;
        let centre = (0.0, radius);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            st = step(&st, &u, &s, &p, DT).unwrap();
            let r = ((st.x - centre.0).powi(2) + (st.y - centre.1).powi(2)).sqrt();
            worst = worst.max((r - radius).abs());
        }
        assert!(worst < 1e-3, "radius deviation {worst}");
    }

    #[test]
    fn uphill_travels_less_than_flat() {
        let p = VehicleParams::default();
        let u = ControlInput::new(2.4, 0.0);
        let run = |s: &LayerStack| {
            let mut st = VehicleState::at_rest(Pose2::new(-20.0, 0.0, 0.0));
            for _ in 0..150 {
                st = step(&st, &u, s, &p, DT).unwrap();
            }
            st.x + 20.0
        };
        let flat = run(&stack(TerrainRecipe::Flat));
        let ramp = run(&stack(TerrainRecipe::Ramp { angle_deg: 10.0, azimuth_deg: 0.0 }));
        assert!(ramp < flat, "ramp {ramp} vs flat {flat}");
    }

    #[test]
    fn fifteen_degree_climb_costs_about_twenty_percent() {
        let p = VehicleParams::default();
        let s = stack(TerrainRecipe::Ramp { angle_deg: 15.0, azimuth_deg: 0.0 });
        let v_ref = 0.5 * p.v_max;
        let mut st = VehicleState::at_rest(Pose2::new(-25.0, 0.0, 0.0));
        for _ in 0..120 {
            st = step(&st, &ControlInput::new(v_ref, 0.0), &s, &p, DT).unwrap();
        }
        assert!((st.v / v_ref - 0.8).abs() < 1e-3, "ratio {}", st.v / v_ref);
    }

    #[test]
    fn side_slope_drifts_downhill() {
        let p = VehicleParams::default();
        // rises towards +y, vehicle drives along +x
        let s = stack(TerrainRecipe::Ramp { angle_deg: 10.0, azimuth_deg: 90.0 });
        let mut st = VehicleState { v: 1.5, ..VehicleState::at_rest(Pose2::new(-10.0, 0.0, 0.0)) };
        for _ in 0..60 {
            st = step(&st, &ControlInput::new(1.5, 0.0), &s, &p, DT).unwrap();
        }
        assert!(st.y < -0.1, "expected downhill drift, y = {}", st.y);
        assert_eq!(st.yaw, 0.0);
    }

    #[test]
    fn flat_step_is_pure_bicycle() {
        let s = stack(TerrainRecipe::Flat);
        let mut p = VehicleParams::default();
        let st = VehicleState { x: 1.0, y: 2.0, yaw: 0.3, v: 1.2, delta: 0.1, t: 0.0 };
        let u = ControlInput::new(1.7, -0.2);
        let a = step(&st, &u, &s, &p, DT).unwrap();
        p.gravity_coupling = 0.0;
        p.lateral_coupling = 0.0;
        let b = step(&st, &u, &s, &p, DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leaving_terrain_terminates() {
        let s = stack(TerrainRecipe::Flat);
        let p = VehicleParams::default();
        let st = VehicleState { v: 3.0, ..VehicleState::at_rest(Pose2::new(29.95, 0.0, 0.0)) };
        assert!(matches!(step(&st, &ControlInput::new(3.0, 0.0), &s, &p, DT), Err(Error::OutOfBounds(_))));
        assert!(step(&st, &ControlInput::new(3.0, 0.0), &s, &p, 0.2).is_err());
    }
}
