//! Error type shared by every module in the crate.

use thiserror::Error;

/// Everything that can go wrong in the laboratory.
///
/// Numerical routines never panic on bad input; they validate their
/// preconditions and return one of these variants instead.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entry at ({row},{col}) breaks symmetry")]
    NotSymmetric { row: usize, col: usize },

    #[error("form is singular (det = 0)")]
    SingularForm,

    #[error("entry magnitude {value} exceeds the supported cap {cap}")]
    EntryTooLarge { value: i64, cap: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("work budget exceeded: needs about {required} steps, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },

    #[error("local solubility inconclusive at p = {p} (search depth {depth})")]
    Inconclusive { p: u64, depth: u32 },

    #[error("point left the numerical range of the reduction (Im z = {im:e})")]
    ReductionUnderflow { im: f64 },

    #[error("reduction did not terminate within {max_steps} steps")]
    ReductionDiverged { max_steps: u32 },

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    DerivativeOrder { order: usize, max: usize },

    #[error("fit needs at least {needed} data points, got {got}")]
    NotEnoughData { needed: usize, got: usize },

    #[error("count is zero at P = {p}; form may be locally obstructed or the box too small")]
    EmptyCount { p: f64 },

    #[error("truncation degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },

    #[error("tail of the dual sum is not summable within budget (bound {bound:e})")]
    TailNotSummable { bound: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
