use super::{MissionPlan, PlannerLimits};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::terrain::LayerStack;

fn integrate_arc(p: &Pose2, curvature: f64, s: f64, steps: usize) -> Vec<Pose2> {
    // midpoint-rule integration of the unicycle, independent of the closed form
    let h = s / steps as f64;
    let mut out = Vec::with_capacity(steps);
    let (mut x, mut y) = (p.x, p.y);
    for k in 0..steps {
        let mid = p.yaw + curvature * h * (k as f64 + 0.5);
        x += h * mid.cos();
        y += h * mid.sin();
        out.push(Pose2::new(x, y, p.yaw + curvature * h * (k + 1) as f64));
    }
    out
}

/// Checks that the plan is in bounds, collision-free and built from exact
/// forward arcs of the primitive length within the curvature limit.
pub fn validate_plan(plan: &MissionPlan, stack: &LayerStack, limits: &PlannerLimits) -> Result<()> {
    if plan.poses.is_empty() || plan.edge_costs.len() != plan.poses.len() {
        return Err(Error::Format("plan needs poses and one edge cost per pose".into()));
    }
    for (k, p) in plan.poses.iter().enumerate() {
        if !stack.contains(p.position()) || stack.class_at(p.position()).is_blocked() {
            return Err(Error::PlannerFailure(format!("pose {k} is outside the free space")));
        }
    }
    let kmax = limits.max_curvature();
    let samples = (limits.step / limits.sample_spacing).ceil().max(1.0) as usize;
    let fine = 4000;
    for (k, pair) in plan.poses.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let curvature = wrap_angle(b.yaw - a.yaw) / limits.step;
        if curvature.abs() > kmax + 1e-9 {
            return Err(Error::PlannerFailure(format!("edge {k} curvature {curvature:.4} exceeds {kmax:.4}")));
        }
        let path = integrate_arc(a, curvature, limits.step, fine);
        let end = path[fine - 1];
        if (end.position() - b.position()).norm() > 1e-6 {
            return Err(Error::PlannerFailure(format!("edge {k} is not a forward arc of length {}", limits.step)));
        }
        for s in 1..=samples {
            let q = path[(s * fine / samples).max(1) - 1];
            if stack.class_at(q.position()).is_blocked() {
                return Err(Error::PlannerFailure(format!("edge {k} crosses a blocked cell")));
            }
        }
    }
    if plan.edge_costs[0] != 0.0 || plan.edge_costs.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Format("edge costs must be non-negative with a zero first entry".into()));
    }
    let sum: f64 = plan.edge_costs.iter().sum();
    if (sum - plan.total_cost).abs() > 1e-9 * sum.max(1.0) {
        return Err(Error::Format(format!("total cost {} disagrees with edge sum {sum}", plan.total_cost)));
    }
    Ok(())
}

/// Along- and cross-heading gradient sampled along every edge of the plan.
pub fn plan_gradient_profile(plan: &MissionPlan, stack: &LayerStack, spacing: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut sample = |p: Point2, heading: f64| -> Result<()> {
        let (gx, gy) = stack.gradient_at(p)?;
        let (s, c) = heading.sin_cos();
        out.push((gx * c + gy * s, -gx * s + gy * c));
        Ok(())
    };
    if let Some(first) = plan.poses.first() {
        sample(first.position(), first.yaw)?;
    }
    for pair in plan.poses.windows(2) {
        let d = pair[1].position() - pair[0].position();
        let n = (d.norm() / spacing).ceil().max(1.0) as usize;
        let turn = wrap_angle(pair[1].yaw - pair[0].yaw);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            // chord interpolation is within a few millimetres of the arc
            let p = pair[0].position() + d * t;
            sample(p, pair[0].yaw + turn * t)?;
        }
    }
    Ok(out)
}
