use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("curvature undefined: {0}")]
    CurvatureUndefined(String),
    #[error("singular gram matrix: {0} (use a ridge lambda > 0)")]
    Singular(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no path found after {expansions} expansions")]
    NoPath { expansions: usize },
    #[error("node expansion cap of {cap} exceeded")]
    ExpansionCap { cap: usize },
    #[error("planner failure: {0}")]
    PlannerFailure(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
