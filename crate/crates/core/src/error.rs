use thiserror::Error;

/// Errors shared across the whole library.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("valuation error: {0}")]
    Valuation(String),

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("window overflow: exponent {exponent} of variable {var} on chart {chart} leaves [-{window}, {window}]")]
    WindowOverflow {
        chart: usize,
        var: usize,
        exponent: i64,
        window: u32,
    },

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("not a unit: {0}")]
    NotAUnit(String),

    #[error("cochain is not closed: {0}")]
    NotClosed(String),

    #[error("window too small: verdicts at D and D+2 disagree ({0})")]
    WindowTooSmall(String),

    #[error("class not in the reference span: {0}")]
    NotInSpan(String),

    #[error("gauge mismatch: {0}")]
    GaugeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
