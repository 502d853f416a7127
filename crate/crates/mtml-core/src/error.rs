//! Error type shared across the core modules.

use alloc::string::String;

/// Errors surfaced by the core computations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes do not agree.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A matrix that must have orthonormal columns does not.
    NotOrthonormal { residual: f64 },
    /// QR factorization hit a (numerically) rank-deficient column.
    RankDeficient { column: usize, step_norm: f64 },
    /// No admissible anchor-positive pair exists at the requested match count.
    NTooStrict { n: usize, admissible_pairs: usize },
    /// A loss was requested over an empty triplet batch.
    EmptyBatch,
    /// A configuration value is out of its documented range.
    InvalidConfig(String),
    /// Dataset contents violate a construction invariant.
    InvalidData(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, batch: usize },
    /// Not enough records for the requested evaluation.
    NotEnoughRecords { needed: usize, got: usize },
}

impl core::fmt::Display for CoreError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoreError::DimensionMismatch {
                context,
                expected,
                got,
            } => write!(f, "dimension mismatch in {context}: expected {expected}, got {got}"),
            CoreError::NotOrthonormal { residual } => {
                write!(f, "matrix is not orthonormal: ||X'X - I||_F = {residual:e}")
            }
            CoreError::RankDeficient { column, step_norm } => write!(
                f,
                "rank-deficient QR input at column {column} (step norm {step_norm:e})"
            ),
            CoreError::NTooStrict {
                n,
                admissible_pairs,
            } => write!(
                f,
                "n too strict: no admissible anchor-positive pair at n = {n} ({admissible_pairs} admissible pairs)"
            ),
            CoreError::EmptyBatch => write!(f, "empty triplet batch"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::InvalidData(msg) => write!(f, "invalid dataset: {msg}"),
            CoreError::Diverged { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            CoreError::NotEnoughRecords { needed, got } => {
                write!(f, "not enough records: needed {needed}, got {got}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
