//! Batch orchestration: terrain, data collection, training, planning,
//! closed-loop runs and evaluation, each driven by one config.

mod collect;
mod config;
mod metrics;
mod run;
mod workflow;

pub use collect::{
    collect_dataset, coverage_report, dataset_files, excitation_schedule, read_dataset, write_dataset, CoverageReport,
    ScheduledEpisode, COVERAGE_FILE,
};
pub use config::{ExperimentConfig, ScriptFamily};
pub use metrics::{cross_track_series, tracking_rmse, EvalReport, RunMetadata};
pub use run::{read_controller_log, run_closed_loop, write_controller_log, ControllerLogRow, RunResult, RunSettings, CONTROLLER_LOG_HEADER};
pub use workflow::{
    collect, evaluate_log, load_stack, mission_reference, plan_mission, read_fit_report, read_reference, run_reference,
    synthesize_terrain, tlp_reference, train, write_json, write_terrain, FitReport, Mission, Reference, CONTROLLER_LOG_FILE,
    DATASET_DIR, EVAL_FILE, FIT_REPORT_FILE, MODEL_FILE, PLAN_FILE, TERRAIN_CSV_FILE, TERRAIN_FILE, TLP_FILE,
};
