use thiserror::Error;

/// Errors produced anywhere in the pooling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input")]
    EmptyInput,

    #[error("group '{label}' has {n} observation(s); at least 2 are required")]
    DegenerateGroup { label: String, n: usize },

    #[error("group '{label}' has zero within-group variance")]
    ZeroVariance { label: String },

    #[error("denominator degrees of freedom are zero (total n equals the number of groups)")]
    ZeroDenominatorDf,

    #[error("numerator mean square is zero for '{source_label}'")]
    ZeroNumerator { source_label: String },

    #[error("chi-square statistic is zero for '{source_label}' (imputation {imputation}{})", row_suffix(*.row))]
    ZeroStatistic {
        source_label: String,
        imputation: usize,
        row: Option<usize>,
    },

    #[error("at least 2 imputations are required, got {0}")]
    InsufficientImputations(usize),

    #[error("model specification: {0}")]
    ModelSpec(String),

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("no convergence after {iterations} iterations (last change {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },

    #[error("covariance update is not positive definite")]
    SingularCovariance,

    #[error("contrast covariance for effect '{0}' is singular")]
    ContrastSingular(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("predictor cross-product matrix is singular (collinear predictors)")]
    Collinearity,

    #[error("full-model log-likelihood {full} is below reduced-model {reduced}")]
    NestingViolation { full: f64, reduced: f64 },

    #[error("schema: {0}")]
    Schema(String),

    #[error("integrity: {0}")]
    Integrity(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn row_suffix(row: Option<usize>) -> String {
    row.map(|r| format!(", row {r}")).unwrap_or_default()
}

impl Error {
    /// Process exit code for the CLI: 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::EmptyInput
            | Error::DegenerateGroup { .. }
            | Error::ModelSpec(_)
            | Error::Schema(_)
            | Error::Integrity(_)
            | Error::Config(_) => 2,
            Error::Io(_) => 4,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 4,
            Error::Csv(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
