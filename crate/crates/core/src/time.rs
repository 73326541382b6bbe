//! Virtual-time units.
//!
//! Chain timestamps and token dates are virtual milliseconds from scenario
//! start. Processing costs need sub-millisecond resolution (62.5 ms stages),
//! so durations are carried as integer microseconds.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub const fn from_ms(ms: u64) -> Self {
        Micros(ms * 1000)
    }

    /// Rounds a fractional millisecond value to the nearest microsecond.
    /// Negative and non-finite inputs clamp to zero.
    pub fn from_ms_f64(ms: f64) -> Self {
        if !ms.is_finite() || ms <= 0.0 {
            return Micros::ZERO;
        }
        Micros((ms * 1000.0).round() as u64)
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Whole milliseconds, truncating.
    pub fn as_ms(self) -> u64 {
        self.0 / 1000
    }

    pub fn saturating_sub(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl Sum for Micros {
    fn sum<I: Iterator<Item = Micros>>(iter: I) -> Micros {
        Micros(iter.map(|m| m.0).sum())
    }
}

/// Renders as milliseconds with three decimals, e.g. `62.500`.
impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}
