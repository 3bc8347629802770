use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("magnetization {m} outside grid [{m_min}, {m_max}]")]
    OutOfRange { m: i64, m_min: i64, m_max: i64 },
    #[error("effective field vanishes at m = {m}")]
    DegenerateField { m: i64 },
    #[error("state and propagator live on different grids")]
    GridMismatch,
    #[error("distribution not normalized (total = {total})")]
    Unnormalized { total: f64 },
    #[error("negative evolution time {t}")]
    NegativeDuration { t: f64 },
    #[error("oracle grid has {bins} bins (limit 200)")]
    OracleGridTooLarge { bins: usize },
    #[error("oracle needs at least 1000 steps, got {n_steps}")]
    OracleTooFewSteps { n_steps: usize },
    #[error("empty tau schedule")]
    EmptySchedule,
    #[error("non-finite {what} at cycle {cycle}")]
    NonFinite { what: &'static str, cycle: u64 },
    #[error("configuration errors: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DegenerateField { .. } => "degenerate_field",
            Error::GridMismatch => "grid_mismatch",
            Error::Unnormalized { .. } => "unnormalized",
            Error::NegativeDuration { .. } => "negative_duration",
            Error::OracleGridTooLarge { .. } => "oracle_grid_too_large",
            Error::OracleTooFewSteps { .. } => "oracle_too_few_steps",
            Error::EmptySchedule => "empty_schedule",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
