mod common;

use koopnav::geometry::Pose2;
use koopnav::planner::{
    edge_cost, plan, plan_gradient_profile, read_plan, validate_plan, write_plan, MissionPlan, PlannerLimits,
    PlannerMode,
};
use koopnav::terrain::{build_layer_stack, gradient_cost, CellRegion, HeightGrid, LayerStack, TerrainRecipe};
use koopnav::Error;
use proptest::prelude::*;

fn obstacle_map(regions: &[(usize, usize, usize, usize)]) -> LayerStack {
    let obstacles: Vec<CellRegion> = regions
        .iter()
        .map(|&(r, dr, c, dc)| CellRegion::new(r, (r + dr).min(80), c, (c + dc).min(80)))
        .filter(|o| !(o.contains(40, 20) || o.contains(40, 60)))
        .collect();
    let h = HeightGrid::from_fn([-20.0, -20.0], 0.5, 81, 81, |_, _| 0.0).unwrap();
    build_layer_stack(h, &obstacles, 0.27, 0.47).unwrap()
}

fn cross_slope_cost(p: &MissionPlan, stack: &LayerStack) -> f64 {
    let spacing = 0.25;
    plan_gradient_profile(p, stack, spacing).unwrap().iter().map(|(_, perp)| gradient_cost(*perp, stack.g_max) * spacing).sum()
}

fn mode_strategy() -> impl Strategy<Value = PlannerMode> {
    prop::sample::select(PlannerMode::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plans_on_random_maps_validate(
        regions in prop::collection::vec((5usize..70, 0usize..8, 24usize..56, 0usize..4), 1..5),
        mode in mode_strategy(),
    ) {
        let stack = obstacle_map(&regions);
        let limits = PlannerLimits::default();
        let (start, goal) = (Pose2::new(-10.0, 0.0, 0.0), Pose2::new(10.0, 0.0, 0.0));
        match plan(&stack, &start, &goal, mode, 1.0, &limits) {
            Ok(p) => {
                validate_plan(&p, &stack, &limits).unwrap();
                let sum: f64 = p.edge_costs.iter().sum();
                prop_assert!((sum - p.total_cost).abs() < 1e-9 * p.total_cost.max(1.0));
                prop_assert_eq!(p.edge_costs[0], 0.0);
                let again = plan(&stack, &start, &goal, mode, 1.0, &limits).unwrap();
                prop_assert_eq!(p, again);
            }
            Err(e) => prop_assert!(matches!(e, Error::NoPath { .. }), "{e}"),
        }
    }

    #[test]
    fn edge_costs_are_positive_and_zero_weight_is_mode_free(
        x in -15.0f64..15.0, y in -15.0f64..15.0, yaw in -3.1f64..3.1, k in 0usize..5,
    ) {
        let stack = common::stack_for(common::ramp_ridge_recipe(), 0);
        let limits = PlannerLimits::default();
        let from = Pose2::new(x, y, yaw);
        let to = koopnav::planner::arc_endpoint(&from, limits.primitive_curvatures()[k], limits.step);
        prop_assume!(stack.contains(to.position()));
        let base = edge_cost(&from, &to, PlannerMode::Default, &stack, 0.0).unwrap();
        for m in PlannerMode::ALL {
            let c = edge_cost(&from, &to, m, &stack, 1.0).unwrap();
            prop_assert!(c > 0.0 && c.is_finite());
            prop_assert_eq!(edge_cost(&from, &to, m, &stack, 0.0).unwrap(), base);
        }
    }
}

#[test]
fn rollover_weight_reduces_cross_slope_cost() {
    let stack = common::stack_for(common::ridge_recipe(), 0);
    let limits = PlannerLimits::default();
    let (start, goal) = (Pose2::new(-10.0, 0.0, 0.0), Pose2::new(10.0, 0.0, 0.0));
    let costs: Vec<f64> = [0.0, 1.0, 4.0]
        .iter()
        .map(|w| cross_slope_cost(&plan(&stack, &start, &goal, PlannerMode::RolloverAware, *w, &limits).unwrap(), &stack))
        .collect();
    assert!(costs[1] <= costs[0] && costs[2] <= costs[1], "{costs:?}");
    assert!(costs[2] < costs[0]);
}

#[test]
fn zero_weight_plans_coincide() {
    let stack = common::stack_for(common::ramp_ridge_recipe(), 0);
    let limits = PlannerLimits::default();
    let (start, goal) = (Pose2::new(-10.0, 0.0, 0.0), Pose2::new(10.0, 0.0, 0.0));
    let base = plan(&stack, &start, &goal, PlannerMode::Default, 0.0, &limits).unwrap();
    for m in PlannerMode::ALL {
        let p = plan(&stack, &start, &goal, m, 0.0, &limits).unwrap();
        assert_eq!(p.poses, base.poses);
        assert_eq!(p.total_cost, base.total_cost);
    }
}

#[test]
fn plan_files_round_trip() {
    let stack = common::stack_for(TerrainRecipe::Flat, 0);
    let p = plan(&stack, &Pose2::new(-5.0, 0.0, 0.0), &Pose2::new(5.0, 3.0, 0.0), PlannerMode::GradientAware, 2.0, &PlannerLimits::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.csv");
    write_plan(&p, &path).unwrap();
    assert_eq!(read_plan(&path).unwrap(), p);
}

#[test]
fn blocked_goal_and_expansion_cap_are_reported() {
    let stack = obstacle_map(&[]);
    let limits = PlannerLimits::default();
    let start = Pose2::new(-10.0, 0.0, 0.0);
    assert!(matches!(
        plan(&stack, &start, &Pose2::new(30.0, 0.0, 0.0), PlannerMode::Default, 1.0, &limits),
        Err(Error::PlannerFailure(_))
    ));
    let tight = PlannerLimits { max_expansions: 3, ..limits };
    assert!(matches!(
        plan(&stack, &start, &Pose2::new(10.0, 0.0, 0.0), PlannerMode::Default, 1.0, &tight),
        Err(Error::ExpansionCap { .. })
    ));
}
