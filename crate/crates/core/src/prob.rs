//! Probability arithmetic backends.
//!
//! Every distributional computation in this crate runs in one of two modes:
//! 64-bit floats for Monte Carlo paths, or arbitrary-precision rationals for
//! oracle and verification paths. The mode is fixed by the [`Weight`] type
//! parameter, so the two can never be mixed inside a single computation.

use std::cmp::Ordering;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Exact rational number used on all oracle paths.
pub type Rational = BigRational;

/// Tolerance used when deciding whether a float pmf is normalized.
pub const FLOAT_UNIT_TOL: f64 = 1e-9;

/// Tolerance used when comparing a float mean against criticality 1.
pub const FLOAT_ONE_TOL: f64 = 1e-9;

/// Numeric backing for probability mass.
///
/// Implemented by `f64` (Monte Carlo mode) and [`Rational`] (exact mode).
/// Operations take references so that big-rational values are not cloned
/// more than necessary.
pub trait Weight:
    Clone + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// True when arithmetic in this mode is exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_count(v: u64) -> Self;
    fn from_ratio(num: u64, den: u64) -> Self;

    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;

    fn is_zero(&self) -> bool;
    fn to_f64(&self) -> f64;

    /// Whether `self`, as the total mass of a pmf, counts as normalized.
    /// Exact equality in rational mode, `FLOAT_UNIT_TOL` in float mode.
    fn is_unit_total(&self) -> bool;

    /// Compare against 1, with `FLOAT_ONE_TOL` slack in float mode.
    /// Used for criticality classification of reproduction laws.
    fn cmp_one(&self) -> Ordering;

    /// Parse a probability literal: a decimal like `0.5`, a fraction like
    /// `1/2`, or a plain integer.
    fn parse(text: &str) -> Option<Self>;

    /// Canonical text form, used when rendering pmfs.
    fn render(&self) -> String;
}

impl Weight for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_count(v: u64) -> Self {
        v as f64
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_unit_total(&self) -> bool {
        (self - 1.0).abs() <= FLOAT_UNIT_TOL
    }

    fn cmp_one(&self) -> Ordering {
        if (self - 1.0).abs() <= FLOAT_ONE_TOL {
            Ordering::Equal
        } else if *self < 1.0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((num, den)) = text.split_once('/') {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            if den == 0.0 {
                return None;
            }
            return Some(num / den);
        }
        let v: f64 = text.parse().ok()?;
        v.is_finite().then_some(v)
    }

    fn render(&self) -> String {
        format!("{self}")
    }
}

impl Weight for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Rational as Zero>::zero()
    }
    fn one() -> Self {
        <Rational as One>::one()
    }
    fn from_count(v: u64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_unit_total(&self) -> bool {
        One::is_one(self)
    }

    fn cmp_one(&self) -> Ordering {
        self.cmp(&<Rational as One>::one())
    }

    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((num, den)) = text.split_once('/') {
            let num: BigInt = num.trim().parse().ok()?;
            let den: BigInt = den.trim().parse().ok()?;
            if Zero::is_zero(&den) {
                return None;
            }
            return Some(Rational::new(num, den));
        }
        if let Some((int_part, frac_part)) = text.split_once('.') {
            // decimal literal: digits/10^k, exact
            let digits = frac_part.trim();
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let int_part = if int_part.trim().is_empty() {
                BigInt::from(0)
            } else {
                int_part.trim().parse().ok()?
            };
            let negative = int_part.is_negative() || text.trim_start().starts_with('-');
            let frac: BigInt = digits.parse().ok()?;
            let scale = BigInt::from(10u32).pow(digits.len() as u32);
            let abs = Rational::from_integer(int_part.abs()) + Rational::new(frac, scale);
            return Some(if negative { -abs } else { abs });
        }
        let v: BigInt = text.parse().ok()?;
        Some(Rational::from_integer(v))
    }

    fn render(&self) -> String {
        format!("{self}")
    }
}

/// Convenience constructor for rational literals in tests and oracles.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_float_literals() {
        assert_eq!(<f64 as Weight>::parse("0.5"), Some(0.5));
        assert_eq!(<f64 as Weight>::parse("1/2"), Some(0.5));
        assert_eq!(<f64 as Weight>::parse("3"), Some(3.0));
        assert_eq!(<f64 as Weight>::parse("x"), None);
        assert_eq!(<f64 as Weight>::parse("1/0"), None);
    }

    #[test]
    fn parses_rational_literals() {
        assert_eq!(<Rational as Weight>::parse("1/2"), Some(rat(1, 2)));
        assert_eq!(<Rational as Weight>::parse("0.25"), Some(rat(1, 4)));
        assert_eq!(<Rational as Weight>::parse("0.5"), Some(rat(1, 2)));
        assert_eq!(<Rational as Weight>::parse("2"), Some(rat(2, 1)));
        assert_eq!(<Rational as Weight>::parse("-0.5"), Some(rat(-1, 2)));
        assert_eq!(<Rational as Weight>::parse("1/0"), None);
    }

    #[test]
    fn unit_totals() {
        assert!(1.0f64.is_unit_total());
        assert!((1.0 + 5e-10).is_unit_total());
        assert!(!(1.0 + 5e-8).is_unit_total());
        assert!(rat(1, 1).is_unit_total());
        assert!(!rat(999_999_999_999, 1_000_000_000_000).is_unit_total());
    }

    #[test]
    fn compares_against_one_with_tolerance() {
        assert_eq!((1.0f64 + 1e-12).cmp_one(), Ordering::Equal);
        assert_eq!(0.7f64.cmp_one(), Ordering::Less);
        assert_eq!(1.5f64.cmp_one(), Ordering::Greater);
        assert_eq!(rat(1, 1).cmp_one(), Ordering::Equal);
        assert_eq!(rat(7, 10).cmp_one(), Ordering::Less);
    }
}
