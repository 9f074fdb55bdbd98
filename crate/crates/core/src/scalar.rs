//! Scalar fields used throughout the crate.
//!
//! Exact computations run over [`Q`] (arbitrary precision rationals); the
//! quantum backend and the Jordan numerics run over `f64`. Generic code is
//! written against [`Field`], whose zero test is exact for `Q` and uses
//! [`FLOAT_TOL`] for `f64`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Q = BigRational;

/// Absolute tolerance on normalized float quantities.
pub const FLOAT_TOL: f64 = 1e-9;

pub trait Field:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True for exact arithmetic.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_f64_lossy(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn abs(&self) -> Self;
    /// Serialized form: `p/q` for rationals, 17 significant digits for floats.
    fn render(&self) -> String;
    /// Exact value for `Q`, the float's exact binary value for `f64`.
    fn to_rational(&self) -> Q;
    fn from_rational(q: &Q) -> Self;

    fn is_nonnegative(&self) -> bool {
        !self.is_negative()
    }
}

impl Field for Q {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        Q::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Q::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_f64_lossy(v: f64) -> Self {
        Q::from_float(v).unwrap_or_else(Zero::zero)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn render(&self) -> String {
        render_rational(self)
    }
    fn to_rational(&self) -> Q {
        self.clone()
    }
    fn from_rational(q: &Q) -> Self {
        q.clone()
    }
}

impl Field for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        f64::abs(*self) <= FLOAT_TOL
    }
    fn is_positive(&self) -> bool {
        *self > FLOAT_TOL
    }
    fn is_negative(&self) -> bool {
        *self < -FLOAT_TOL
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn render(&self) -> String {
        render_float(*self)
    }
    fn to_rational(&self) -> Q {
        Q::from_f64_lossy(*self)
    }
    fn from_rational(q: &Q) -> Self {
        Field::to_f64(q)
    }
}

pub fn render_rational(q: &Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn render_float(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{:.16e}", v)
}

/// Parses `"p/q"`, an integer, or a finite decimal (`"0.25"`, `"-1.5e-3"`) exactly.
pub fn parse_rational(s: &str) -> Result<Q> {
    let t = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Q::new(p, q));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = t[i + 1..].parse().map_err(|_| bad())?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Q::from_integer(all * num::pow(ten, scale as usize))
    } else {
        Q::new(all, num::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Shorthand for the exact rational `num/den`.
pub fn q(num: i64, den: i64) -> Q {
    Q::from_ratio(num, den)
}

pub fn qi(v: i64) -> Q {
    Q::from_i64(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals_exactly() {
        assert_eq!(parse_rational("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_rational(" -3/6 ").unwrap(), q(-1, 2));
        assert_eq!(parse_rational("0.1").unwrap(), q(1, 10));
        assert_eq!(parse_rational("2.5e-1").unwrap(), q(1, 4));
        assert_eq!(parse_rational("7").unwrap(), qi(7));
        assert_eq!(parse_rational("1E2").unwrap(), qi(100));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn renders_rationals_and_floats() {
        assert_eq!(q(3, 6).render(), "1/2");
        assert_eq!(qi(-4).render(), "-4");
        assert_eq!(0.5f64.render(), "5.0000000000000000e-1");
        assert_eq!((-0.0f64).render(), "0");
    }
}
