use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidSpec(String),

    #[error("root solve failed: {0}")]
    RootSolveFailure(String),

    #[error("degenerate modes: {0}")]
    DegenerateModes(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("level enumeration would produce {count} levels (cap {cap})")]
    CombinatorialOverflow { count: u128, cap: usize },

    #[error("phase grid has {cells} cells (cap {cap})")]
    GridTooLarge { cells: u128, cap: usize },

    #[error("energy drift {drift:.3e} at t = {t} exceeds the integrator contract; reduce dt")]
    StepTooLarge { t: f64, drift: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("section produced no crossings")]
    NoCrossings,

    #[error("record undersampled: {0}")]
    UndersampledRecord(String),

    #[error("Fock basis dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    EigensolveFailure(String),

    #[error("ambiguous level matching: {0}")]
    MatchingAmbiguous(String),

    #[error("config: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::RootSolveFailure(_) => "RootSolveFailure",
            Error::DegenerateModes(_) => "DegenerateModes",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::CombinatorialOverflow { .. } => "CombinatorialOverflow",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NoCrossings => "NoCrossings",
            Error::UndersampledRecord(_) => "UndersampledRecord",
            Error::DimensionCap { .. } => "DimensionCap",
            Error::EigensolveFailure(_) => "EigensolveFailure",
            Error::MatchingAmbiguous(_) => "MatchingAmbiguous",
            Error::ConfigParse(_) => "ConfigParse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit code: 2 config, 3 numeric, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigParse(_)
            | Error::InvalidSpec(_)
            | Error::DimensionMismatch { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::CombinatorialOverflow { .. }
            | Error::GridTooLarge { .. }
            | Error::DimensionCap { .. } => 4,
            _ => 3,
        }
    }
}
