use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MissionPlan, PlannerMode};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

pub const PLAN_HEADER: [&str; 5] = ["idx", "x", "y", "heading", "edge_cost"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSidecar {
    pub mode: PlannerMode,
    pub w: f64,
    pub total_cost: f64,
    pub expansions: usize,
}

#[derive(Serialize, Deserialize)]
struct PlanRow {
    idx: usize,
    x: f64,
    y: f64,
    heading: f64,
    edge_cost: f64,
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_plan_csv<W: Write>(plan: &MissionPlan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (idx, (p, c)) in plan.poses.iter().zip(&plan.edge_costs).enumerate() {
        w.serialize(PlanRow { idx, x: p.x, y: p.y, heading: p.yaw, edge_cost: *c })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plan_csv<R: Read>(input: R) -> Result<(Vec<Pose2>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != PLAN_HEADER {
        return Err(Error::Format(format!("plan header must be {}", PLAN_HEADER.join(","))));
    }
    let mut poses = Vec::new();
    let mut costs = Vec::new();
    for (k, row) in r.deserialize::<PlanRow>().enumerate() {
        let row = row?;
        if row.idx != k {
            return Err(Error::Format(format!("plan row {k} has index {}", row.idx)));
        }
        poses.push(Pose2::new(row.x, row.y, row.heading));
        costs.push(row.edge_cost);
    }
    if poses.is_empty() {
        return Err(Error::Format("plan file has no poses".into()));
    }
    Ok((poses, costs))
}

/// Writes `path` (CSV) and the JSON sidecar next to it.
pub fn write_plan(plan: &MissionPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_plan_csv(plan, BufWriter::new(File::create(path)?))?;
    let side = PlanSidecar { mode: plan.mode, w: plan.w, total_cost: plan.total_cost, expansions: plan.expansions };
    let mut f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<MissionPlan> {
    let path = path.as_ref();
    let (poses, edge_costs) = read_plan_csv(BufReader::new(File::open(path)?))?;
    let side: PlanSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    Ok(MissionPlan { poses, edge_costs, mode: side.mode, w: side.w, total_cost: side.total_cost, expansions: side.expansions })
}
