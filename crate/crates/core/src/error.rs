//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors surfaced by matrix kernels, the SVD engine, the gradient rules,
/// the tape, and the finite-difference oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({row},{col}) out of bounds for {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix must have positive dimensions")]
    EmptyMatrix,
    #[error("SVD did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("degenerate spectrum: relative gap {gap:.3e} below tolerance {tol:.3e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },
    #[error("singular value {value:.3e} too small to invert (tolerance {tol:.3e})")]
    SingularSInverse { value: f64, tol: f64 },
    #[error("loss value is not real (|Im| = {imag:.3e})")]
    NonRealLoss { imag: f64 },
    #[error("tape node holds a {got}, expected a {expected}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("unknown loss \"{0}\"")]
    UnknownLoss(String),
    #[error("loss \"{0}\" has no tape program")]
    UnsupportedTapeLoss(String),
    #[error("invalid matrix file: {0}")]
    InvalidMatrixFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
