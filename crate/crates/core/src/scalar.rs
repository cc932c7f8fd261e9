//! Scalar types the search runs over.
//!
//! Cost tables, the elimination planner and the brute-force oracle only ever
//! add and compare costs, so they work over any [`Cost`]. The analytic backend
//! needs real arithmetic (division by bandwidths and rates) and is restricted
//! to floating point.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div};

use num_rational::Ratio;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

/// A cost value: non-negative, additive and totally ordered on the values
/// the planner produces.
pub trait Cost:
    Copy
    + PartialOrd
    + Zero
    + Add<Output = Self>
    + Div<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Builds `hundredths / 100`, exactly when the type allows it.
    fn from_hundredths(hundredths: i64) -> Self {
        Self::from_i64(hundredths).unwrap() / Self::from_i64(100).unwrap()
    }

    fn to_seconds(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Cost for f32 {}
impl Cost for f64 {}
impl Cost for Ratio<i64> {
    fn from_hundredths(hundredths: i64) -> Self {
        Ratio::new(hundredths, 100)
    }
}

/// Exact rational cost used for synthetic tables.
pub type Exact = Ratio<i64>;

/// Picoseconds per second, the resolution of [`quantize_seconds`].
pub const PICOS_PER_SECOND: i64 = 1_000_000_000_000;

/// Rounds a duration to the nearest picosecond as an exact rational.
pub fn quantize_seconds(seconds: f64) -> Exact {
    Ratio::new((seconds * PICOS_PER_SECOND as f64).round() as i64, PICOS_PER_SECOND)
}
