// SPDX-License-Identifier: Apache-2.0

//! Scalar types used for gate-equivalent area and normalized delay.
//!
//! Cost accounting is generic so the same netlist can be measured with
//! `f64` for quick reports or with an exact rational when ratios must be
//! compared without rounding.

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, NumAssign, ToPrimitive};

/// Numeric type backing costs, delays and derived metrics.
pub trait Scalar:
    Num + NumAssign + Copy + PartialOrd + Debug + Display + Send + Sync + FromPrimitive + ToPrimitive + 'static
{
    /// Parses a plain decimal literal such as `2.33`, `-0.5` or `4`.
    fn parse_decimal(text: &str) -> Option<Self>;

    /// `num / den` in this scalar type.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).unwrap() / Self::from_i64(den).unwrap()
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap()
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn parse_decimal(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}

impl Scalar for f32 {
    fn parse_decimal(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}

impl Scalar for Rational64 {
    fn parse_decimal(text: &str) -> Option<Self> {
        let text = text.trim();
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        if let Some((num, den)) = body.split_once('/') {
            let value = Rational64::new(num.parse().ok()?, den.parse().ok()?);
            return Some(if negative { -value } else { value });
        }
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i64 = digits.parse().ok()?;
        let denom = 10i64.checked_pow(frac_part.len() as u32)?;
        let value = Rational64::new(numer, denom);
        Some(if negative { -value } else { value })
    }
}

/// Sums an iterator of scalars starting from zero.
pub fn sum<S: Scalar, I: IntoIterator<Item = S>>(items: I) -> S {
    items.into_iter().fold(S::zero(), |acc, x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_decimal_parsing_is_exact() {
        assert_eq!(Rational64::parse_decimal("2.33"), Some(Rational64::new(233, 100)));
        assert_eq!(Rational64::parse_decimal("4"), Some(Rational64::from_integer(4)));
        assert_eq!(Rational64::parse_decimal("-0.5"), Some(Rational64::new(-1, 2)));
        assert_eq!(Rational64::parse_decimal("7/3"), Some(Rational64::new(7, 3)));
        assert_eq!(Rational64::parse_decimal("abc"), None);
        assert_eq!(Rational64::parse_decimal("."), None);
    }

    #[test]
    fn ratio_matches_across_types() {
        assert_eq!(f64::ratio(67, 100), 0.67);
        assert_eq!(Rational64::ratio(67, 100), Rational64::new(67, 100));
        assert!((f32::ratio(1, 3) - 0.333_333).abs() < 1e-5);
    }
}
