//! A numerical laboratory for counting integer points on quadrics and probing
//! how those sparse point sets distribute along horocycle orbits on products
//! of the modular surface.
//!
//! The crate is organised around one pipeline:
//!
//! * [`quadform`]: integer quadratic forms, Smith normal form, mod-q kernel
//!   counts, and local solubility certificates;
//! * [`quadric_enum`]: enumeration of integer zeros `F(x) = 0` in a box and
//!   growth-exponent fits;
//! * [`weights`]: compactly supported smooth weights, Sobolev norms, and the
//!   two-variable splitting kernel with its window functions;
//! * [`quotient`]: the modular quotient, fundamental-domain reduction,
//!   horocycle flow, Lie derivatives, and orbit averages;
//! * [`expsums`]: weighted exponential sums, complete Gauss sums with exact
//!   square-cancellation bounds, oscillatory integrals, and Poisson checks;
//! * [`circle`]: Farey arc decompositions, major/minor arc regions, the
//!   delta identity, van der Corput differencing, and lattice-sum bounds;
//! * [`experiments`]: reproducible experiment drivers with CSV/JSON output.
//!
//! All randomised entry points take explicit seeds and every parallel loop
//! merges in a fixed order, so a given configuration produces byte-identical
//! output across runs.

pub mod budget;
pub mod circle;
pub mod error;
pub mod experiments;
pub mod expsums;
pub mod numeric;
pub mod quadform;
pub mod quadric_enum;
pub mod quotient;
pub mod verify;
pub mod weights;

pub use budget::Budget;
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
