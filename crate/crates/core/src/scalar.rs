//! Probability scalars.
//!
//! Everything that carries a probability (transition rows, type strategies,
//! posteriors, chain edges, expected payoffs) is generic over [`Prob`]. The
//! floating point implementations compare with absolute tolerances; the
//! exact rational implementation compares exactly.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// A probability-carrying scalar: `f32`, `f64` or an exact rational.
pub trait Prob:
    Clone
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
    /// Absolute tolerance for "sums to one" checks.
    fn norm_tolerance() -> Self;

    /// Absolute tolerance for argmax ties between expected payoffs.
    fn tie_tolerance() -> Self;

    /// Absolute tolerance for matching block-transition masses.
    fn bisim_tolerance() -> Self;

    /// True when arithmetic is exact (no rounding).
    fn is_exact() -> bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parses `"0.25"`, `"1/4"` or `"1"`.
    fn parse_prob(text: &str) -> Option<Self>;

    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::zero)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `|self - other| <= tol`.
    fn close_to(&self, other: &Self, tol: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= *tol
    }
}

fn split_ratio(text: &str) -> Option<(&str, &str)> {
    let (n, d) = text.split_once('/')?;
    Some((n.trim(), d.trim()))
}

macro_rules! impl_float_prob {
    ($t:ty, $norm:expr, $tie:expr, $bisim:expr) => {
        impl Prob for $t {
            fn norm_tolerance() -> Self {
                $norm
            }
            fn tie_tolerance() -> Self {
                $tie
            }
            fn bisim_tolerance() -> Self {
                $bisim
            }
            fn is_exact() -> bool {
                false
            }
            fn from_ratio(num: i64, den: i64) -> Self {
                num as $t / den as $t
            }
            fn parse_prob(text: &str) -> Option<Self> {
                let text = text.trim();
                if let Some((n, d)) = split_ratio(text) {
                    let n: $t = n.parse().ok()?;
                    let d: $t = d.parse().ok()?;
                    if d == 0.0 {
                        return None;
                    }
                    return Some(n / d);
                }
                text.parse().ok()
            }
        }
    };
}

impl_float_prob!(f64, 1e-12, 1e-12, 1e-9);
// Tolerances scaled to f32 precision.
impl_float_prob!(f32, 1e-5, 1e-6, 1e-5);

impl Prob for BigRational {
    fn norm_tolerance() -> Self {
        BigRational::zero()
    }
    fn tie_tolerance() -> Self {
        BigRational::zero()
    }
    fn bisim_tolerance() -> Self {
        BigRational::zero()
    }
    fn is_exact() -> bool {
        true
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn parse_prob(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = split_ratio(text) {
            let n: BigInt = n.parse().ok()?;
            let d: BigInt = d.parse().ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(BigRational::new(n, d));
        }
        if let Some((int, frac)) = text.split_once('.') {
            // Decimal literals are read exactly: "0.35" is 35/100.
            let negative = int.starts_with('-');
            let digits = format!("{}{}", int.trim_start_matches('-'), frac);
            let num: BigInt = digits.parse().ok()?;
            let den = num_traits::pow(BigInt::from(10), frac.len());
            let value = BigRational::new(num, den);
            return Some(if negative { -value } else { value });
        }
        let n: BigInt = text.parse().ok()?;
        Some(BigRational::from_integer(n))
    }
}

/// Sum of a slice.
pub fn total<T: Prob>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + v.clone())
}

/// Checks that `values` is a probability vector within `T::norm_tolerance()`.
pub fn is_distribution<T: Prob>(values: &[T]) -> bool {
    !values.is_empty()
        && values.iter().all(|v| *v >= T::zero())
        && total(values).close_to(&T::one(), &T::norm_tolerance())
}

/// Rescales a nonnegative vector to sum to one. Returns `None` when the mass is zero.
pub fn normalise<T: Prob>(values: &[T]) -> Option<Vec<T>> {
    let mass = total(values);
    if mass.is_zero() {
        return None;
    }
    Some(values.iter().map(|v| v.clone() / mass.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ratios_and_decimals() {
        assert_eq!(f64::parse_prob("1/4"), Some(0.25));
        assert_eq!(f64::parse_prob(" 0.5 "), Some(0.5));
        assert_eq!(f64::parse_prob("1/0"), None);
        assert_eq!(
            BigRational::parse_prob("0.35"),
            Some(BigRational::from_ratio(7, 20))
        );
        assert_eq!(
            BigRational::parse_prob("2/6"),
            Some(BigRational::from_ratio(1, 3))
        );
        assert_eq!(
            BigRational::parse_prob("1"),
            Some(BigRational::from_ratio(1, 1))
        );
        assert_eq!(BigRational::parse_prob("x"), None);
    }

    #[test]
    fn distribution_checks() {
        assert!(is_distribution(&[0.5f64, 0.5]));
        assert!(!is_distribution(&[0.5f64, 0.6]));
        assert!(!is_distribution::<f64>(&[]));
        let third = BigRational::from_ratio(1, 3);
        assert!(is_distribution(&[third.clone(), third.clone(), third]));
        assert_eq!(normalise(&[0.0f64, 0.25]), Some(vec![0.0, 1.0]));
        assert_eq!(normalise(&[0.0f64, 0.0]), None);
    }
}
