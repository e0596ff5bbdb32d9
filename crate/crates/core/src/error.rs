use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid sizing error: {0}")]
    GridSizing(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("direction (theta={theta_deg}°, phi={phi_deg}°) is not a grid sample")]
    OffGrid { theta_deg: f64, phi_deg: f64 },

    #[error("target outside source span: {0}")]
    OutOfSpan(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("zero field: {0}")]
    ZeroField(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("codebook of {size} entries exceeds the limit of {limit}")]
    CodebookTooLarge { size: u128, limit: u128 },

    #[error("config error: {0}")]
    Config(String),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_scenario(self, scenario: &str) -> Self {
        Error::Scenario {
            scenario: scenario.to_string(),
            source: Box::new(self),
        }
    }
}
