use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use koopnav::koopman::{read_family, write_family};
use koopnav::pipeline::{self, ExperimentConfig, Mission, RunMetadata};
use koopnav::planner::{write_plan, PlannerMode};
use koopnav::vehicle::write_episode_csv;
use koopnav::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PLANNER: u8 = 4;
const EXIT_DIVERGED: u8 = 5;

#[derive(Parser)]
#[command(name = "koopnav", version, about = "Terrain-aware Koopman planning and control experiments")]
struct Cli {
    /// Flat JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Terrain operations.
    Terrain {
        #[command(subcommand)]
        action: TerrainAction,
    },
    /// Run the excitation schedule and write episode logs plus a coverage report.
    Collect(TerrainArg),
    /// Fit the curvature-binned model family from episode logs.
    Train(TrainArgs),
    /// Plan a mission between the configured start and goal.
    Plan(PlanArgs),
    /// Plan or load a reference, track it in closed loop and score the run.
    Run(RunArgs),
    /// Score a controller log against a reference path.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum TerrainAction {
    /// Synthesize the configured terrain and write it as binary and CSV DEM.
    Gen,
}

#[derive(Args)]
struct TerrainArg {
    /// DEM file (binary or CSV); the configured recipe is synthesized when omitted.
    #[arg(long)]
    terrain: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of episode CSVs [default: <out>/dataset].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train despite failed coverage or empty curvature bins.
    #[arg(long)]
    force: bool,
    /// Fit without the gradient channel.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    terrain: TerrainArg,
    /// dft, ea, ga or ra [default: config mode].
    #[arg(long)]
    mode: Option<PlannerMode>,
    /// Terrain cost weight [default: config w].
    #[arg(long)]
    w: Option<f64>,
    /// Start pose as x,y,heading.
    #[arg(long, value_parser = parse_pose)]
    start: Option<[f64; 3]>,
    /// Goal pose as x,y,heading.
    #[arg(long, value_parser = parse_pose)]
    goal: Option<[f64; 3]>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Model family file [default: <out>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// dft, ea, ga, ra or tlp [default: config mode].
    #[arg(long, conflicts_with = "reference")]
    mission: Option<Mission>,
    /// Replay a stored reference (plan CSV, episode log or controller log).
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Controller log to score.
    #[arg(long)]
    log: PathBuf,
    /// Reference path (plan CSV, episode log or controller log).
    #[arg(long)]
    reference: PathBuf,
}

fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected x,y,heading".to_owned())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Length(_) => EXIT_USAGE,
        Error::NoPath { .. } | Error::ExpansionCap { .. } | Error::PlannerFailure(_) => EXIT_PLANNER,
        _ => EXIT_DATA,
    }
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> koopnav::Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        std::fs::create_dir_all(&cli.out)?;
        Ok(Self { cfg, out: cli.out.clone() })
    }

    fn apply_plan_args(&mut self, a: &PlanArgs) -> koopnav::Result<()> {
        if let Some(m) = a.mode {
            self.cfg.mode = m;
        }
        if let Some(w) = a.w {
            self.cfg.w = w;
        }
        if let Some(s) = a.start {
            self.cfg.start = s;
        }
        if let Some(g) = a.goal {
            self.cfg.goal = g;
        }
        self.cfg.validate()
    }
}

fn terrain_gen(ctx: &Context) -> koopnav::Result<u8> {
    let grid = pipeline::synthesize_terrain(&ctx.cfg)?;
    let path = pipeline::write_terrain(&grid, &ctx.out)?;
    log::info!("wrote {} ({} x {} cells)", path.display(), grid.rows(), grid.cols());
    Ok(0)
}

fn collect(ctx: &Context, a: &TerrainArg) -> koopnav::Result<u8> {
    let stack = pipeline::load_stack(&ctx.cfg, a.terrain.as_deref())?;
    let dir = ctx.out.join(pipeline::DATASET_DIR);
    let coverage = pipeline::collect(&ctx.cfg, &stack, &dir)?;
    println!(
        "coverage {:.3} of bins with >= {} samples (required {:.3})",
        coverage.covered_fraction, coverage.floor, coverage.required
    );
    if coverage.passed {
        Ok(0)
    } else {
        eprintln!("error: coverage audit failed; logs kept in {}", dir.display());
        Ok(EXIT_DATA)
    }
}

fn train(ctx: &mut Context, a: &TrainArgs) -> koopnav::Result<u8> {
    if a.no_augment {
        ctx.cfg.augmented = false;
    }
    let dir = a.data.clone().unwrap_or_else(|| ctx.out.join(pipeline::DATASET_DIR));
    let logs = pipeline::read_dataset(&dir)?;
    let (family, report) = pipeline::train(&ctx.cfg, &logs, a.force)?;
    write_family(&family, ctx.out.join(pipeline::MODEL_FILE))?;
    pipeline::write_json(&report, ctx.out.join(pipeline::FIT_REPORT_FILE))?;
    for b in &report.bins {
        println!("bin {} samples {} one-step rmse {:.4e}", b.bin, b.samples, b.one_step_rmse);
    }
    Ok(0)
}

fn plan(ctx: &mut Context, a: &PlanArgs) -> koopnav::Result<u8> {
    ctx.apply_plan_args(a)?;
    let stack = pipeline::load_stack(&ctx.cfg, a.terrain.terrain.as_deref())?;
    let p = pipeline::plan_mission(&ctx.cfg, &stack, ctx.cfg.mode)?;
    write_plan(&p, ctx.out.join(pipeline::PLAN_FILE))?;
    println!("{} plan: {} poses, length {:.2} m, cost {:.3}, {} expansions", p.mode, p.poses.len(), p.length(), p.total_cost, p.expansions);
    Ok(0)
}

fn sibling_coverage(model: &Path) -> Vec<f64> {
    let report = model.with_file_name(pipeline::FIT_REPORT_FILE);
    pipeline::read_fit_report(report).map(|r| r.sample_fractions).unwrap_or_default()
}

fn run(ctx: &mut Context, a: &RunArgs) -> koopnav::Result<u8> {
    ctx.apply_plan_args(&a.plan)?;
    let model = a.model.clone().unwrap_or_else(|| ctx.out.join(pipeline::MODEL_FILE));
    let family = read_family(&model)?;
    let stack = pipeline::load_stack(&ctx.cfg, a.plan.terrain.terrain.as_deref())?;
    let (reference, name) = match &a.reference {
        Some(path) => (pipeline::read_reference(path)?, path.display().to_string()),
        None => {
            let mission = a.mission.unwrap_or(Mission::Planned(ctx.cfg.mode));
            let (reference, plan, rows) = pipeline::mission_reference(&ctx.cfg, &stack, mission)?;
            if let Some(p) = plan {
                write_plan(&p, ctx.out.join(pipeline::PLAN_FILE))?;
            }
            if let Some(rows) = rows {
                write_episode_csv(&rows, ctx.out.join(pipeline::TLP_FILE))?;
            }
            (reference, mission.to_string())
        }
    };
    let result = pipeline::run_reference(&ctx.cfg, &family, &stack, &reference, &name, sibling_coverage(&model))?;
    pipeline::write_controller_log(&result.log, ctx.out.join(pipeline::CONTROLLER_LOG_FILE))?;
    pipeline::write_json(&result.report, ctx.out.join(pipeline::EVAL_FILE))?;
    let r = &result.report;
    println!("{name}: rmse {:.4} m, max {:.4} m, completed {}, {:.1} s", r.rmse, r.max_cross_track, r.completed, r.metadata.duration);
    if r.diverged {
        eprintln!("error: run diverged; {}", r.metadata.notes.join("; "));
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn eval(ctx: &Context, a: &EvalArgs) -> koopnav::Result<u8> {
    let log = pipeline::read_controller_log(&a.log)?;
    let reference = pipeline::read_reference(&a.reference)?;
    let metadata = RunMetadata { mission: a.reference.display().to_string(), seed: ctx.cfg.seed, ..RunMetadata::default() };
    let settings = ctx.cfg.run_settings();
    let report = pipeline::evaluate_log(&log, &reference.points, settings.goal_tolerance, settings.divergence_threshold, metadata)?;
    pipeline::write_json(&report, ctx.out.join(pipeline::EVAL_FILE))?;
    println!("rmse {:.6} m, max {:.4} m, completed {}", report.rmse, report.max_cross_track, report.completed);
    Ok(0)
}

fn dispatch(cli: &Cli) -> koopnav::Result<u8> {
    let mut ctx = Context::new(cli)?;
    match &cli.command {
        Command::Terrain { action: TerrainAction::Gen } => terrain_gen(&ctx),
        Command::Collect(a) => collect(&ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Plan(a) => plan(&mut ctx, a),
        Command::Run(a) => run(&mut ctx, a),
        Command::Eval(a) => eval(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
