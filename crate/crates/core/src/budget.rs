//! Work budgets for the heavier enumeration and summation routines.

use crate::{Error, Result};

/// Default ceiling on elementary steps for a single operation.
pub const DEFAULT_STEPS: u64 = 5_000_000_000;

/// Ceiling on the number of terms of a complete exponential sum over
/// `(Z/q)^n` when the form does not factor coordinate-wise.
pub const GAUSS_FULL_ENUM_STEPS: u64 = 100_000_000;

/// A simple step budget.
///
/// Routines estimate their work before starting and refuse with
/// [`Error::BudgetExceeded`] rather than running away.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { limit }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Checks that `required` steps fit in the budget.
    pub fn check(&self, required: u64) -> Result<()> {
        if required > self.limit {
            Err(Error::BudgetExceeded {
                required,
                budget: self.limit,
            })
        } else {
            Ok(())
        }
    }

    /// Budget for `count` items of `each` steps, guarding against overflow.
    pub fn check_product(&self, count: u64, each: u64) -> Result<()> {
        match count.checked_mul(each) {
            Some(total) => self.check(total),
            None => Err(Error::BudgetExceeded {
                required: u64::MAX,
                budget: self.limit,
            }),
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            limit: DEFAULT_STEPS,
        }
    }
}
