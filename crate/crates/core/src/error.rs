use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A physical parameter violates its admissible range.
    #[error("invalid parameter: {field} {reason}")]
    Parameter { field: String, reason: String },

    /// A scenario document could not be turned into a resolved configuration.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("time step {dt:e} s too large for line with tau {tau:e} s; use dt <= {max_dt:e} s")]
    TimeStep { dt: f64, tau: f64, max_dt: f64 },

    /// The nodal matrix could not be factorized.
    #[error("singular nodal matrix; floating subnetwork: nodes {nodes:?}")]
    Singular { nodes: Vec<usize> },

    #[error("numeric fault at step {step}: {message}")]
    Numeric { step: usize, message: String },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Checks `value > 0` and finite.
pub(crate) fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, "must be > 0"))
    }
}

pub(crate) fn non_negative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, "must be >= 0"))
    }
}
