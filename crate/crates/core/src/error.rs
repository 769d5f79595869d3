use thiserror::Error;

/// A point of the periodic domain, stored as `[theta, phi]`.
pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not positive definite at ({:.6}, {:.6})", .point[0], .point[1])]
    NonPositiveMetric { point: Point },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("frame is degenerate at ({:.6}, {:.6}): smallest singular value {sigma:e}", .point[0], .point[1])]
    DegenerateDistribution { point: Point, sigma: f64 },

    #[error("defect form leaves the dictionary cone at ({:.6}, {:.6}): coefficients {coefficients:?}", .point[0], .point[1])]
    NotInCone { point: Point, coefficients: Vec<f64> },

    #[error("no transverse covector for the line field (best clearance {best:e})")]
    NoTransverseCovector { best: f64 },

    #[error("no normal direction for the corrugation plane at ({:.6}, {:.6})", .point[0], .point[1])]
    DegenerateFrame { point: Point },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("no frequency up to {lambda_max} meets the step budget ({diagnosis})")]
    FrequencyExhausted { lambda_max: f64, diagnosis: String },

    #[error("layer field grid of {nodes} nodes exceeds the configured cap {cap}")]
    ResolutionCap { nodes: usize, cap: usize },

    #[error("stage {stage} failed: {source}")]
    StageFailed {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("flow primitive of chart {chart} is not single-valued on the orbit through ({:.6}, {:.6}): orbit mean {mean:?}", .orbit[0], .orbit[1])]
    PeriodicityObstruction { orbit: Point, chart: usize, mean: Vec<f64> },

    #[error("curve leaves the distribution (residual {residual:e})")]
    NotHorizontal { residual: f64 },

    #[error("projection search exhausted after {trials} trials (best margin {best_margin:e})")]
    SearchExhausted { trials: usize, best_margin: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the command line error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveMetric { .. } => "NonPositiveMetric",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DegenerateDistribution { .. } => "DegenerateDistribution",
            Error::NotInCone { .. } => "NotInCone",
            Error::NoTransverseCovector { .. } => "NoTransverseCovector",
            Error::DegenerateFrame { .. } => "DegenerateFrame",
            Error::OutOfRange(_) => "OutOfRange",
            Error::FrequencyExhausted { .. } => "FrequencyExhausted",
            Error::ResolutionCap { .. } => "ResolutionCap",
            Error::StageFailed { .. } => "StageFailed",
            Error::PeriodicityObstruction { .. } => "PeriodicityObstruction",
            Error::NotHorizontal { .. } => "NotHorizontal",
            Error::SearchExhausted { .. } => "SearchExhausted",
            Error::Precondition(_) => "Precondition",
            Error::Parse(_) => "Parse",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
