use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PduError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// The boundary curve passes through (or numerically too close to) the origin,
    /// so its winding number is not defined on the sampled grid.
    #[error("curve passes through the origin at sample {index} (|f| = {magnitude:e})")]
    CurveThroughOrigin { index: usize, magnitude: f64 },

    #[error("generation failed after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: usize, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

impl PduError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PduError::InvalidArgument(msg.into())
    }

    /// True for errors caused by numerically degenerate data rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PduError::DegenerateSignal(_)
                | PduError::CurveThroughOrigin { .. }
                | PduError::GenerationFailure { .. }
                | PduError::UndefinedMetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, PduError>;
