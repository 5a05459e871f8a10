use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument (time, probability, ...) is outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter violates its constraint (sigma <= 0, weights off the simplex, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The covariate process is not increasing for the supplied parameters.
    #[error("covariate process is not monotone: {0}")]
    NonMonotone(String),

    #[error("root bracketing failed: {what} (lo={lo}, hi={hi}, target={target})")]
    Bracket { what: String, lo: f64, hi: f64, target: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate censoring interval for subject {subject}: S(y_l)={s_lower} <= S(y_u)={s_upper}")]
    DegenerateInterval { subject: usize, s_lower: f64, s_upper: f64 },

    /// Malformed data record or model/simulation configuration.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("comparison: {0}")]
    Comparison(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by the caller's data or configuration rather than by
    /// numerical breakdown during computation.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Comparison(_))
    }
}
