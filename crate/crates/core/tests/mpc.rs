mod common;

use koopnav::koopman::{lift, KoopmanModel, LiftedState, PolarPose};
use koopnav::mpc::{condense, objective, projected_gradient, solve, solve_box_qp, stack_inputs, MpcConfig, QpOptions};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use rand::Rng;

struct Scenario {
    model: KoopmanModel,
    z0: LiftedState,
    z_ref: Vec<LiftedState>,
    u_prev: Vector2<f64>,
    g: Vector2<f64>,
    cfg: MpcConfig,
}

fn scenario(seed: u64, horizon: usize) -> Scenario {
    let mut rng = common::rng(seed);
    let model = common::random_model(&mut rng, 0.99);
    let cfg = MpcConfig { horizon, ..MpcConfig::default() };
    let z0 = lift(&PolarPose::new(rng.random_range(0.0..0.5), rng.random_range(-1.0..1.0)));
    let z_ref = (1..=horizon).map(|k| lift(&PolarPose::new(0.07 * k as f64, rng.random_range(-0.2..0.2)))).collect();
    let u_prev = Vector2::new(rng.random_range(0.0..cfg.u_max.x), rng.random_range(cfg.u_min.y..cfg.u_max.y));
    let g = Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    Scenario { model, z0, z_ref, u_prev, g, cfg }
}

/// Cost by explicit simulation of the lifted model.
fn simulated_cost(s: &Scenario, u: &[Vector2<f64>]) -> (f64, Vec<LiftedState>) {
    let (m, cfg) = (&s.model, &s.cfg);
    let mut z = s.z0;
    let mut prev = s.u_prev;
    let mut j = 0.0;
    let mut traj = Vec::new();
    for k in 0..u.len() {
        z = m.a * z + m.b * u[k] + m.bg * s.g;
        traj.push(z);
        let e = m.c * z - m.c * s.z_ref[k];
        let du = (u[k] - prev) / cfg.dt;
        j += (e.transpose() * cfg.tracking_weight * e)[0] + (du.transpose() * cfg.rate_weight * du)[0];
        prev = u[k];
    }
    (j, traj)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn condensed_problem_matches_simulation(seed in 0u64..10_000, horizon in 1usize..15) {
        let s = scenario(seed, horizon);
        let p = condense(&s.model, &s.z0, &s.z_ref, &s.u_prev, &s.g, &s.cfg).unwrap();
        let mut rng = common::rng(seed ^ 0xabc);
        let u: Vec<Vector2<f64>> = (0..horizon).map(|_| Vector2::new(rng.random_range(0.0..4.8), rng.random_range(-0.35..0.35))).collect();
        let (j, traj) = simulated_cost(&s, &u);
        let stacked = stack_inputs(&u);
        prop_assert!((p.cost(&stacked) - j).abs() <= 1e-10 * j.abs().max(1.0), "{} vs {j}", p.cost(&stacked));
        for (a, b) in p.predict(&stacked).iter().zip(&traj) {
            prop_assert!((a - b).norm() <= 1e-10 * b.norm().max(1.0));
        }
        for _ in 0..5 {
            let d = DVector::from_fn(p.hessian.nrows(), |_, _| rng.random_range(-1.0..1.0));
            prop_assert!(d.dot(&(&p.hessian * &d)) >= -1e-9 * p.hessian.norm());
        }
    }

    #[test]
    fn mpc_solution_is_feasible_and_certified(seed in 0u64..10_000) {
        let s = scenario(seed, 10);
        let sol = solve(&s.model, &s.z0, &s.z_ref, &s.u_prev, &s.g, &s.cfg).unwrap();
        let p = condense(&s.model, &s.z0, &s.z_ref, &s.u_prev, &s.g, &s.cfg).unwrap();
        let u = stack_inputs(&sol.inputs);
        for i in 0..u.len() {
            prop_assert!(u[i] >= p.lower[i] && u[i] <= p.upper[i]);
        }
        prop_assert!(sol.converged, "residual {}", sol.residual);
        let grad = &p.hessian * &u + &p.linear;
        prop_assert!(projected_gradient(&u, &grad, &p.lower, &p.upper).norm() <= s.cfg.tolerance);
        let hold = p.clamp(&stack_inputs(&vec![s.u_prev; 10]));
        let zero = p.clamp(&DVector::zeros(u.len()));
        let tol = 1e-9 * sol.cost.abs().max(1.0);
        prop_assert!(sol.cost <= p.cost(&hold) + tol);
        prop_assert!(sol.cost <= p.cost(&zero) + tol);
        prop_assert!((simulated_cost(&s, &sol.inputs).0 - sol.cost).abs() <= 1e-9 * sol.cost.abs().max(1.0));
    }

    #[test]
    fn box_qp_meets_kkt(seed in 0u64..10_000, n in 1usize..30) {
        let mut rng = common::rng(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n) * rng.random_range(1e-4..1.0);
        let f = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let lo = DVector::from_fn(n, |_, _| rng.random_range(-2.0..0.0));
        let hi = DVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.0..3.0));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        let sol = solve_box_qp(&h, &f, &lo, &hi, &x0, &QpOptions { tolerance: 1e-10, max_iterations: 2000 }).unwrap();
        prop_assert!(sol.converged);
        let g = &h * &sol.x + &f;
        for i in 0..n {
            prop_assert!(sol.x[i] >= lo[i] && sol.x[i] <= hi[i]);
        }
        prop_assert!(projected_gradient(&sol.x, &g, &lo, &hi).norm() <= 1e-8);
        let clamped = DVector::from_fn(n, |i, _| x0[i].clamp(lo[i], hi[i]));
        prop_assert!(objective(&h, &f, &sol.x) <= objective(&h, &f, &clamped) + 1e-12);
    }
}

#[test]
fn single_step_without_rate_weight_matches_normal_equations() {
    for seed in 0..20 {
        let mut s = scenario(seed, 1);
        s.cfg.rate_weight = Matrix2::zeros();
        s.cfg.u_min = Vector2::new(-1e6, -1e6);
        s.cfg.u_max = Vector2::new(1e6, 1e6);
        let sol = solve(&s.model, &s.z0, &s.z_ref, &s.u_prev, &s.g, &s.cfg).unwrap();
        let cb = s.model.c * s.model.b;
        let resid = s.model.c * (s.model.a * s.z0 + s.model.bg * s.g) - s.model.c * s.z_ref[0];
        let q = s.cfg.tracking_weight;
        let exact = (cb.transpose() * q * cb).lu().solve(&(-(cb.transpose() * q * resid))).unwrap();
        assert!((sol.inputs[0] - exact).norm() <= 1e-9 * exact.norm().max(1.0), "{:?} vs {exact:?}", sol.inputs[0]);
    }
}

#[test]
fn infeasible_bounds_are_rejected() {
    let h = DMatrix::identity(2, 2);
    let f = DVector::zeros(2);
    let lo = DVector::from_vec(vec![0.0, 1.0]);
    let hi = DVector::from_vec(vec![1.0, 0.0]);
    assert!(solve_box_qp(&h, &f, &lo, &hi, &f, &QpOptions::default()).is_err());
}
