use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps these onto its exit-code contract: `Io`, `Json` and `Schema`
/// are input problems, `Validation` is a rejected system or factor, and
/// `Equivalence` signals that two routes which must agree did not.
#[derive(Debug, Error)]
pub enum FzError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("group enumeration exceeded the cap of {cap} elements")]
    CapExceeded { cap: usize },

    #[error("search budget exceeded: {needed} candidates, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("mismatched systems: {0}")]
    Mismatch(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("base system is not ergodic: {0}")]
    NotErgodic(String),

    #[error("routes disagree: {0}")]
    Equivalence(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, FzError>;

impl FzError {
    /// Exit status for the command line: 1 for unreadable or malformed input,
    /// 2 for rejected input, 3 when two routes disagree.
    pub fn exit_code(&self) -> i32 {
        match self {
            FzError::Io(_) | FzError::Json(_) | FzError::Schema(_) => 1,
            FzError::Equivalence(_) | FzError::NoConvergence(_) => 3,
            _ => 2,
        }
    }
}
