//! Numeric abstraction shared by every model module.
//!
//! All of the model's algebra (thresholds, expected utilities, game payoffs)
//! only needs field operations and an ordering, so it is written once against
//! [`Scalar`] and instantiated for `f64`, `f32` and an exact rational type.
//! Anything transcendental (logit choice, power-law learning functions) goes
//! through `f64` and is converted back.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A real-like scalar: utilities, probabilities and regret coefficients.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance used for weak comparisons. Zero for exact types.
    fn tolerance() -> Self;

    /// True when arithmetic is exact (no rounding).
    fn is_exact() -> bool {
        Self::tolerance().is_zero()
    }

    /// Converts an `f64` literal. Panics only on non-finite input.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("non-representable scalar literal {x}"))
    }

    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer fits scalar")
    }

    /// `num / den` computed in the scalar's own arithmetic.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `|self - other| <= tol`.
    fn approx_eq(self, other: Self) -> bool {
        (self - other).abs() <= Self::tolerance()
    }

    /// `self >= other - tol`: weak preference with rounding slack.
    fn approx_ge(self, other: Self) -> bool {
        self >= other - Self::tolerance()
    }

    /// `self > other + tol`: strict preference beyond rounding slack.
    fn definitely_gt(self, other: Self) -> bool {
        self > other + Self::tolerance()
    }

    /// True for probabilities in the closed unit interval.
    fn is_unit(self) -> bool {
        self >= Self::zero() && self <= Self::one()
    }

    /// True for probabilities in the open unit interval.
    fn is_open_unit(self) -> bool {
        self > Self::zero() && self < Self::one()
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-4
    }
}

impl Scalar for Ratio<i128> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn lit(x: f64) -> Self {
        Ratio::approximate_float(x).unwrap_or_else(|| panic!("non-representable rational {x}"))
    }
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(n as i128)
    }
    fn ratio(num: i64, den: i64) -> Self {
        Ratio::new(num as i128, den as i128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Ratio<i128>;

    #[test]
    fn exact_type_has_zero_tolerance() {
        assert!(Q::is_exact());
        assert!(!f64::is_exact());
        assert_eq!(Q::ratio(2, 6), Q::new(1, 3));
    }

    #[test]
    fn weak_comparisons_use_slack() {
        assert!(1.0f64.approx_ge(1.0 + 1e-12));
        assert!(!1.0f64.definitely_gt(1.0 - 1e-12));
        assert!(Q::ratio(1, 2).approx_ge(Q::ratio(1, 2)));
        assert!(!Q::ratio(1, 2).approx_ge(Q::ratio(1, 2) + Q::ratio(1, 1_000_000_000_000)));
    }

    #[test]
    fn literals_round_trip() {
        assert_eq!(<Q as Scalar>::lit(0.25), Q::new(1, 4));
        assert_eq!(<f32 as Scalar>::lit(0.5), 0.5f32);
        assert_eq!(Q::new(7, 3).as_f64(), 7.0 / 3.0);
    }
}
