use thiserror::Error;

/// Errors raised by the solvers, diagnostics and file formats.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("compactness margin violated: {what} at node {node} ({cells} cells from the domain boundary)")]
    Margin {
        what: String,
        node: usize,
        cells: usize,
    },

    #[error("speed {value} at {point:?}, t = {time} lies outside [{lower}, {upper}]")]
    SpeedOutOfBounds {
        value: f64,
        point: [f64; 3],
        time: f64,
        lower: f64,
        upper: f64,
    },

    #[error("CFL violation: time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("degenerate trajectory: {0}")]
    Degenerate(String),

    #[error("path left the computational domain at {0:?}")]
    ExitedDomain([f64; 3]),

    #[error("boundary point {0:?} is not covered by any graph patch")]
    NotCovered([f64; 3]),

    #[error("containment certificate failed at {point:?} (excess {excess:e})")]
    Certificate { point: [f64; 3], excess: f64 },

    #[error("slice interpolation needs time {needed} beyond the last computed slice {available}")]
    FutureSlice { needed: f64, available: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigViolation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One schema or rule violation found while validating a configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigViolation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl FlowError {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            FlowError::InvalidGrid(_) => "invalid_grid",
            FlowError::ShapeMismatch(_) => "shape_mismatch",
            FlowError::Margin { .. } => "margin",
            FlowError::SpeedOutOfBounds { .. } => "speed_out_of_bounds",
            FlowError::Cfl { .. } => "cfl",
            FlowError::Degenerate(_) => "degenerate",
            FlowError::ExitedDomain(_) => "exited_domain",
            FlowError::NotCovered(_) => "not_covered",
            FlowError::Certificate { .. } => "certificate",
            FlowError::FutureSlice { .. } => "future_slice",
            FlowError::InvalidArgument(_) => "invalid_argument",
            FlowError::Config(_) => "config",
            FlowError::Io(_) => "io",
            FlowError::Json(_) => "json",
        }
    }

    /// Usage and configuration problems map to exit code 2, numerical failures to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            FlowError::Config(_) | FlowError::InvalidArgument(_) | FlowError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
