//! Exact rational parsing for reinforcement parameters.
//!
//! Initial weights are configured as strings so that exact and floating
//! computations agree on the same value: `"3/4"`, `"2"`, and `"0.76"` all
//! parse to exact rationals (decimals are read as fractions over a power of
//! ten, not via `f64`).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatioError {
    #[error("cannot parse '{0}' as a rational (expected p/q, integer, or decimal)")]
    Parse(String),
    #[error("rational '{0}' must be positive")]
    NotPositive(String),
}

/// Parses `p/q`, an integer, or a decimal literal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, RatioError> {
    let t = s.trim();
    let err = || RatioError::Parse(s.to_string());
    if let Some((num, den)) = t.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| err())?;
        let d: BigInt = den.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let int_part: BigInt = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| err())?
        };
        let negative = t.starts_with('-');
        let frac_num: BigInt = frac.parse().map_err(|_| err())?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let mut r = BigRational::from_integer(int_part);
        let frac_part = BigRational::new(frac_num, scale);
        if negative {
            r -= frac_part;
        } else {
            r += frac_part;
        }
        return Ok(r);
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(BigRational::from_integer(n))
}

/// Parses a rational and additionally requires it to be positive.
pub fn parse_positive_rational(s: &str) -> Result<BigRational, RatioError> {
    let r = parse_rational(s)?;
    if r.is_positive() {
        Ok(r)
    } else {
        Err(RatioError::NotPositive(s.to_string()))
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rational within f64 range")
}

/// Canonical `p/q` string (denominator kept even when 1, so the format is
/// stable for echoes into metadata).
pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
