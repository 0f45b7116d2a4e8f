use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch for {what}: expected {expected}, found {found}")]
    Size {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} = {value} is outside its domain [{lo}, {hi}]")]
    Domain {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("simulation fault at t = {time:.4} s: joint `{joint}` at {q:.6} rad left its limits")]
    SimulationFault { time: f64, joint: String, q: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("unobservable: {0}")]
    Unobservable(String),

    #[error("singular contact Jacobian (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("ill-conditioned regression: {0}")]
    Conditioning(String),

    #[error("stage ordering: {0}")]
    StageOrder(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed user input rather than a failed stage.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Validation { .. }
            | Error::Parse { .. }
            | Error::Input(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Contract(_)
            | Error::StageOrder(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Size {
            what,
            expected,
            found,
        })
    }
}
