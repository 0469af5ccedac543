use thiserror::Error;

/// Errors raised by the lattice, sampling and decoding routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("singular basis: diagonal entry {index} of R is {value:e}")]
    SingularBasis { index: usize, value: f64 },

    #[error("enumeration visited more than {cap} nodes")]
    Capacity { cap: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("decoding radius undefined: k*t = {kt} does not exceed ln(1/eps) = {a}")]
    UndefinedRadius { kt: f64, a: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl LatticeError {
    /// True for failures caused by numerics or enumeration limits rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LatticeError::Capacity { .. }
                | LatticeError::Numerical(_)
                | LatticeError::SingularBasis { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LatticeError>;
