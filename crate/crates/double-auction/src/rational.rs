//! Exact rational arithmetic helpers.
//!
//! All money, values, probabilities, and weights in this crate are
//! arbitrary-precision rationals so that every comparison a mechanism makes
//! and every budget identity the harness audits is exact. Floating point
//! appears only inside the Monte Carlo estimator, and its output is converted
//! back losslessly (every finite `f64` is a dyadic rational).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::fmt::Write as _;

pub type Rat = BigRational;

/// `n` as a rational.
pub fn rat_int(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

/// `n/d` as a rational. Panics if `d == 0`; intended for literals.
pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid rational literal {input:?}: {reason}")]
pub struct ParseRatError {
    pub input: String,
    pub reason: &'static str,
}

/// Parses `"p/q"`, a plain integer, or a decimal such as `"0.25"`.
pub fn parse_rat(s: &str) -> Result<Rat, ParseRatError> {
    let err = |reason| ParseRatError { input: s.to_string(), reason };
    let s = s.trim();
    if s.is_empty() {
        return Err(err("empty string"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| err("numerator is not an integer"))?;
        let d: BigInt = den.trim().parse().map_err(|_| err("denominator is not an integer"))?;
        if d.is_zero() {
            return Err(err("denominator is zero"));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("fractional part is not a digit string"));
        }
        let negative = int_part.trim_start().starts_with('-');
        let whole: BigInt = if int_part.is_empty() || int_part == "-" || int_part == "+" {
            BigInt::zero()
        } else {
            int_part.parse().map_err(|_| err("integer part is not an integer"))?
        };
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let frac: BigInt = frac_part.parse().map_err(|_| err("fractional part overflow"))?;
        let abs = BigRational::from_integer(whole.abs()) + BigRational::new(frac, scale);
        return Ok(if negative { -abs } else { abs });
    }
    let n: BigInt = s.parse().map_err(|_| err("not an integer, fraction, or decimal"))?;
    Ok(BigRational::from_integer(n))
}

/// Canonical text form: `"p/q"` for non-integers, `"n"` for integers.
pub fn format_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering with up to `digits` fractional digits (round half away
/// from zero). Used only for display next to the exact form.
pub fn format_rat_decimal(r: &Rat, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = r * BigRational::from_integer(scale.clone());
    let rounded = scaled.round().to_integer();
    let negative = rounded.is_negative();
    let abs = rounded.abs();
    let (whole, frac) = (abs.clone() / &scale, abs % &scale);
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    write!(out, "{whole}").unwrap();
    if digits > 0 {
        let frac_str = frac.to_string();
        out.push('.');
        for _ in frac_str.len()..digits as usize {
            out.push('0');
        }
        out.push_str(&frac_str);
    }
    out
}

/// Nearest-`f64` view of a rational; used for Monte Carlo and display only.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational equal to the given finite float.
pub fn rat_from_f64(x: f64) -> Rat {
    BigRational::from_float(x).expect("finite float")
}

/// Sum of an iterator of rationals (exact, any order gives the same result).
pub fn rat_sum<'a, I: IntoIterator<Item = &'a Rat>>(iter: I) -> Rat {
    iter.into_iter().fold(Rat::zero(), |acc, x| acc + x)
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse_rat("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rat("-3/4").unwrap(), rat(-3, 4));
        assert_eq!(parse_rat("7").unwrap(), rat_int(7));
        assert_eq!(parse_rat("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("-1.5").unwrap(), rat(-3, 2));
        assert_eq!(parse_rat("10/4").unwrap(), rat(5, 2));
        assert_eq!(parse_rat(".5").unwrap(), rat(1, 2));
    }

    #[test]
    fn rejects_malformed_literals() {
        assert!(parse_rat("").is_err());
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("a/b").is_err());
        assert!(parse_rat("1.2.3").is_err());
        assert!(parse_rat("1.-2").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rat(&rat(6, 4)), "3/2");
        assert_eq!(format_rat(&rat_int(-2)), "-2");
        assert_eq!(format_rat_decimal(&rat(1, 3), 4), "0.3333");
        assert_eq!(format_rat_decimal(&rat(-1, 2), 2), "-0.50");
        assert_eq!(format_rat_decimal(&rat_int(5), 0), "5");
    }

    #[test]
    fn float_round_trip_is_exact() {
        let x = 0.1f64;
        let r = rat_from_f64(x);
        assert_eq!(rat_to_f64(&r), x);
        // 0.1 is not exactly 1/10 in binary; conversion must preserve the
        // dyadic value, not the decimal spelling.
        assert_ne!(r, rat(1, 10));
    }
}
