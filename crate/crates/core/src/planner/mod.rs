//! Hybrid A* over the terrain layers with terrain-aware edge costs.

mod io;
mod validate;

pub use io::{read_plan, read_plan_csv, write_plan, write_plan_csv, PlanSidecar, PLAN_HEADER};
pub use validate::{plan_gradient_profile, validate_plan};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2, Pose2};
use crate::terrain::{gradient_cost, LayerStack};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerMode {
    #[serde(rename = "dft")]
    Default,
    #[serde(rename = "ea")]
    ElevationAware,
    #[serde(rename = "ga")]
    GradientAware,
    #[serde(rename = "ra")]
    RolloverAware,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 4] =
        [PlannerMode::Default, PlannerMode::ElevationAware, PlannerMode::GradientAware, PlannerMode::RolloverAware];

    pub fn tag(self) -> &'static str {
        match self {
            PlannerMode::Default => "dft",
            PlannerMode::ElevationAware => "ea",
            PlannerMode::GradientAware => "ga",
            PlannerMode::RolloverAware => "ra",
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PlannerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" | "default" => Ok(PlannerMode::Default),
            "ea" | "elevation" => Ok(PlannerMode::ElevationAware),
            "ga" | "gradient" => Ok(PlannerMode::GradientAware),
            "ra" | "rollover" => Ok(PlannerMode::RolloverAware),
            other => Err(Error::Config(format!("unknown planner mode '{other}' (expected dft, ea, ga or ra)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerLimits {
    /// Arc length of every motion primitive (m).
    pub step: f64,
    /// Spacing of collision samples along a primitive (m).
    pub sample_spacing: f64,
    pub heading_bins: usize,
    /// Bucket size for duplicate detection (m).
    pub cell_size: f64,
    pub goal_tolerance: f64,
    pub heading_tolerance_deg: f64,
    pub max_expansions: usize,
    pub wheelbase: f64,
    pub delta_lim: f64,
}

impl Default for PlannerLimits {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

impl PlannerLimits {
    pub fn for_vehicle(params: &VehicleParams) -> Self {
        Self {
            step: 1.0,
            sample_spacing: 0.25,
            heading_bins: 16,
            cell_size: 0.5,
            goal_tolerance: 0.5,
            heading_tolerance_deg: 30.0,
            max_expansions: 200_000,
            wheelbase: params.wheelbase,
            delta_lim: params.delta_lim,
        }
    }

    pub fn max_curvature(&self) -> f64 {
        self.delta_lim.tan() / self.wheelbase
    }

    /// Curvatures of the five forward primitives.
    pub fn primitive_curvatures(&self) -> [f64; 5] {
        let d = self.delta_lim;
        [-d, -d / 2.0, 0.0, d / 2.0, d].map(|s| s.tan() / self.wheelbase)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.step, self.sample_spacing, self.cell_size, self.goal_tolerance, self.wheelbase];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("planner lengths must be positive".into()));
        }
        if self.heading_bins == 0 || self.max_expansions == 0 {
            return Err(Error::Config("planner needs at least one heading bin and one expansion".into()));
        }
        if !(self.delta_lim > 0.0 && self.delta_lim < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("steering limit must lie in (0, pi/2)".into()));
        }
        if !(self.heading_tolerance_deg >= 0.0) {
            return Err(Error::Config("heading tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Continuous planning pose.
pub type PlanState = Pose2;

/// End pose of a constant-curvature arc of length `s`.
pub fn arc_endpoint(p: &PlanState, curvature: f64, s: f64) -> PlanState {
    if curvature.abs() < 1e-12 {
        return Pose2::new(p.x + s * p.yaw.cos(), p.y + s * p.yaw.sin(), p.yaw);
    }
    let yaw = p.yaw + curvature * s;
    Pose2::new(
        p.x + (yaw.sin() - p.yaw.sin()) / curvature,
        p.y - (yaw.cos() - p.yaw.cos()) / curvature,
        wrap_angle(yaw),
    )
}

fn arc_is_free(p: &PlanState, curvature: f64, limits: &PlannerLimits, stack: &LayerStack) -> bool {
    let n = (limits.step / limits.sample_spacing).ceil().max(1.0) as usize;
    (1..=n).all(|k| {
        let q = arc_endpoint(p, curvature, limits.step * k as f64 / n as f64);
        !stack.class_at(q.position()).is_blocked()
    })
}

/// Collision-free forward successors with their primitive arc length.
pub fn successors(s: &PlanState, limits: &PlannerLimits, stack: &LayerStack) -> Vec<(PlanState, f64, f64)> {
    limits
        .primitive_curvatures()
        .into_iter()
        .filter(|k| arc_is_free(s, *k, limits, stack))
        .map(|k| (arc_endpoint(s, k, limits.step), limits.step, k))
        .collect()
}

/// Mode-dependent cost of the edge `from -> to`, floored at 1% of its length.
pub fn edge_cost(from: &PlanState, to: &PlanState, mode: PlannerMode, stack: &LayerStack, w: f64) -> Result<f64> {
    let d = to.position() - from.position();
    let len = d.norm();
    if len == 0.0 {
        return Ok(0.0);
    }
    let u = d / len;
    let mid = from.position() + d * 0.5;
    let cost = match mode {
        PlannerMode::Default => len,
        PlannerMode::ElevationAware => len + w * (stack.height_at(to.position())? - stack.height_at(from.position())?),
        PlannerMode::GradientAware | PlannerMode::RolloverAware => {
            let (gx, gy) = stack.gradient_at(mid)?;
            let g = if mode == PlannerMode::GradientAware { gx * u.x + gy * u.y } else { -gx * u.y + gy * u.x };
            len + w * len * gradient_cost(g, stack.g_max)
        }
    };
    Ok(cost.max(0.01 * len))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub poses: Vec<PlanState>,
    /// Cost of the edge ending at each pose; the first entry is zero.
    pub edge_costs: Vec<f64>,
    pub mode: PlannerMode,
    pub w: f64,
    pub total_cost: f64,
    pub expansions: usize,
}

impl MissionPlan {
    pub fn points(&self) -> Vec<Point2> {
        self.poses.iter().map(|p| p.position()).collect()
    }

    pub fn length(&self) -> f64 {
        crate::geometry::polyline_length(&self.points())
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    h: f64,
    seq: usize,
    node: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // reversed so the max-heap pops the lexicographically smallest (f, h, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.seq.cmp(&self.seq))
    }
}

struct Node {
    pose: PlanState,
    g: f64,
    edge: f64,
    parent: Option<usize>,
}

fn within_goal(p: &PlanState, goal: &PlanState, limits: &PlannerLimits) -> bool {
    (p.position() - goal.position()).norm() <= limits.goal_tolerance
        && wrap_angle(p.yaw - goal.yaw).abs() <= limits.heading_tolerance_deg.to_radians() + 1e-12
}

struct Buckets {
    origin: Point2,
    cell: f64,
    cols: usize,
    rows: usize,
    headings: usize,
}

impl Buckets {
    fn new(stack: &LayerStack, limits: &PlannerLimits) -> Self {
        let o = stack.height.origin();
        let span = stack.height.max_corner() - Point2::new(o[0], o[1]);
        let cols = (span.x / limits.cell_size).round() as usize + 1;
        let rows = (span.y / limits.cell_size).round() as usize + 1;
        Self { origin: Point2::new(o[0], o[1]), cell: limits.cell_size, cols, rows, headings: limits.heading_bins }
    }

    fn len(&self) -> usize {
        self.rows * self.cols * self.headings
    }

    fn index(&self, p: &PlanState) -> usize {
        let j = (((p.x - self.origin.x) / self.cell).round().max(0.0) as usize).min(self.cols - 1);
        let i = (((p.y - self.origin.y) / self.cell).round().max(0.0) as usize).min(self.rows - 1);
        let width = std::f64::consts::TAU / self.headings as f64;
        let h = (p.yaw.rem_euclid(std::f64::consts::TAU) / width).round() as usize % self.headings;
        (i * self.cols + j) * self.headings + h
    }
}

/// Forward Hybrid A* from `start` to within the goal tolerance of `goal`.
pub fn plan(
    stack: &LayerStack,
    start: &PlanState,
    goal: &PlanState,
    mode: PlannerMode,
    w: f64,
    limits: &PlannerLimits,
) -> Result<MissionPlan> {
    limits.validate()?;
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Config(format!("planner weight must be finite and non-negative, got {w}")));
    }
    for (name, p) in [("start", start), ("goal", goal)] {
        if !stack.contains(p.position()) || stack.class_at(p.position()).is_blocked() {
            return Err(Error::PlannerFailure(format!("{name} ({:.3}, {:.3}) is not in a free cell", p.x, p.y)));
        }
    }
    let start = Pose2::new(start.x, start.y, wrap_angle(start.yaw));
    let heuristic = |p: &PlanState| (goal.position() - p.position()).norm();
    let buckets = Buckets::new(stack, limits);
    let mut best = vec![f64::INFINITY; buckets.len()];
    let mut closed = vec![false; buckets.len()];
    let mut nodes = vec![Node { pose: start, g: 0.0, edge: 0.0, parent: None }];
    let mut open = BinaryHeap::new();
    let mut seq = 0;
    let h0 = heuristic(&start);
    open.push(OpenEntry { f: h0, h: h0, seq, node: 0 });
    best[buckets.index(&start)] = 0.0;
    let mut expansions = 0;
    while let Some(entry) = open.pop() {
        let id = entry.node;
        let pose = nodes[id].pose;
        if within_goal(&pose, goal, limits) {
            return Ok(reconstruct(&nodes, id, mode, w, expansions));
        }
        let b = buckets.index(&pose);
        if closed[b] {
            continue;
        }
        closed[b] = true;
        if expansions >= limits.max_expansions {
            return Err(Error::ExpansionCap { cap: limits.max_expansions });
        }
        expansions += 1;
        for (next, _, _) in successors(&pose, limits, stack) {
            let nb = buckets.index(&next);
            if closed[nb] {
                continue;
            }
            let edge = edge_cost(&pose, &next, mode, stack, w)?;
            let g = nodes[id].g + edge;
            if g >= best[nb] {
                continue;
            }
            best[nb] = g;
            nodes.push(Node { pose: next, g, edge, parent: Some(id) });
            seq += 1;
            let h = heuristic(&next);
            open.push(OpenEntry { f: g + h, h, seq, node: nodes.len() - 1 });
        }
    }
    Err(Error::NoPath { expansions })
}

fn reconstruct(nodes: &[Node], mut id: usize, mode: PlannerMode, w: f64, expansions: usize) -> MissionPlan {
    let total_cost = nodes[id].g;
    let mut poses = Vec::new();
    let mut edge_costs = Vec::new();
    loop {
        poses.push(nodes[id].pose);
        edge_costs.push(nodes[id].edge);
        match nodes[id].parent {
            Some(p) => id = p,
            None => break,
        }
    }
    poses.reverse();
    edge_costs.reverse();
    MissionPlan { poses, edge_costs, mode, w, total_cost, expansions }
}
