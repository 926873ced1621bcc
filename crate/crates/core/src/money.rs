//! Exact monetary amounts stored as integer cents.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Scalar;

/// A monetary amount in cents. Serialized as a decimal number of currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * 100)
    }

    /// Parses a decimal amount; rejects values that are not a whole number of cents.
    pub fn from_decimal(units: f64) -> Option<Self> {
        if !units.is_finite() {
            return None;
        }
        let scaled = units * 100.0;
        let cents = scaled.round();
        if (scaled - cents).abs() > 1e-6 || cents.abs() > 9.0e15 {
            return None;
        }
        Some(Money(cents as i64))
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn as_units_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// The amount in currency units, computed exactly in `S`'s arithmetic.
    pub fn to_scalar<S: Scalar>(self) -> S {
        S::ratio(self.0, 100)
    }

    /// Midpoint, rounded down to the cent.
    pub fn midpoint(self, other: Money) -> Money {
        Money((self.0 + other.0).div_euclid(2))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Money {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        if self.0 % 100 == 0 {
            serializer.serialize_i64(self.0 / 100)
        } else {
            serializer.serialize_f64(self.as_units_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let units = f64::deserialize(deserializer)?;
        Money::from_decimal(units).ok_or_else(|| {
            serde::de::Error::custom(format!("{units} is not a whole number of cents"))
        })
    }
}
