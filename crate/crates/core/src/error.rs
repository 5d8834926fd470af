use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("model evaluation produced non-finite values in {0}")]
    ModelEvaluation(String),

    /// Matrix inversion refused because the matrix is singular or its
    /// condition number exceeds the configured limit.
    #[error("{what} is singular (condition number {cond:.3e})")]
    Singular { what: String, cond: f64 },

    #[error("CARE iteration did not converge after {iterations} steps; residual history {history:?}")]
    CareNonConvergence { iterations: usize, history: Vec<f64> },

    #[error("QP construction: {0}")]
    Problem(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("integration blew up at t = {t}: non-finite state")]
    BlowUp { t: f64, last_good: Vec<f64> },

    #[error("control tick at t = {t} failed: {reason}")]
    Tick { t: f64, reason: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
