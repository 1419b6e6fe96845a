//! Edge-length literals with exact forms.
//!
//! Accepted syntax: plain numbers, `a/b`, terminating decimals, `pi`,
//! `pi*r`, `r*pi`, `pi/b` and `sqrt(r)`, where `r` is a rational literal.

use std::fmt;

use num_rational::Ratio;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Exact shape of a parsed length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthExpr {
    /// A binary floating-point value with no recognised exact form.
    Float,
    Rational(Ratio<i64>),
    /// `π · r`.
    PiRational(Ratio<i64>),
    /// `√r`.
    SqrtRational(Ratio<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Length {
    value: f64,
    expr: LengthExpr,
    literal: String,
}

impl Length {
    pub fn from_f64(value: f64) -> Self {
        Length { value, expr: LengthExpr::Float, literal: format!("{value}") }
    }

    pub fn rational(numer: i64, denom: i64) -> Self {
        let r = Ratio::new(numer, denom);
        Length { value: ratio_f64(r), expr: LengthExpr::Rational(r), literal: format!("{}/{}", r.numer(), r.denom()) }
    }

    pub fn pi_times(numer: i64, denom: i64) -> Self {
        let r = Ratio::new(numer, denom);
        Length {
            value: std::f64::consts::PI * ratio_f64(r),
            expr: LengthExpr::PiRational(r),
            literal: format!("pi*{}/{}", r.numer(), r.denom()),
        }
    }

    pub fn sqrt_of(numer: i64, denom: i64) -> Self {
        let r = Ratio::new(numer, denom);
        Length {
            value: ratio_f64(r).sqrt(),
            expr: LengthExpr::SqrtRational(r),
            literal: format!("sqrt({}/{})", r.numer(), r.denom()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let literal = text.trim().to_string();
        let s: String =
            literal.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase().replace('π', "pi");
        let bad = || Error::LengthLiteral(literal.clone());
        let expr = if s == "pi" {
            LengthExpr::PiRational(Ratio::from_integer(1))
        } else if let Some(rest) = s.strip_prefix("pi*") {
            LengthExpr::PiRational(parse_ratio(rest).ok_or_else(bad)?)
        } else if let Some(rest) = s.strip_suffix("*pi") {
            LengthExpr::PiRational(parse_ratio(rest).ok_or_else(bad)?)
        } else if let Some(rest) = s.strip_prefix("pi/") {
            let d = parse_ratio(rest).ok_or_else(bad)?;
            if *d.numer() == 0 {
                return Err(bad());
            }
            LengthExpr::PiRational(d.recip())
        } else if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            let r = parse_ratio(inner).ok_or_else(bad)?;
            if *r.numer() < 0 {
                return Err(bad());
            }
            LengthExpr::SqrtRational(r)
        } else if let Some(r) = parse_ratio(&s) {
            LengthExpr::Rational(r)
        } else {
            let v: f64 = s.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            return Ok(Length { value: v, expr: LengthExpr::Float, literal });
        };
        let value = match expr {
            LengthExpr::Rational(r) => ratio_f64(r),
            LengthExpr::PiRational(r) => std::f64::consts::PI * ratio_f64(r),
            LengthExpr::SqrtRational(r) => ratio_f64(r).sqrt(),
            LengthExpr::Float => unreachable!(),
        };
        Ok(Length { value, expr, literal })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn expr(&self) -> LengthExpr {
        self.expr
    }

    pub fn literal(&self) -> &str {
        &self.literal
    }

    /// True when the literal denotes a rational number exactly.
    pub fn is_rational(&self) -> bool {
        match self.expr {
            LengthExpr::Rational(_) => true,
            LengthExpr::SqrtRational(r) => is_square(*r.numer()) && is_square(*r.denom()),
            LengthExpr::PiRational(r) => *r.numer() == 0,
            LengthExpr::Float => false,
        }
    }

    /// `Some(k)` when the length is exactly `kπ` with integer `k ≥ 1`.
    pub fn exact_pi_multiple(&self) -> Option<i64> {
        match self.expr {
            LengthExpr::PiRational(r) if r.is_integer() && *r.numer() >= 1 => Some(*r.numer()),
            _ => None,
        }
    }

    /// `true` when the exact form rules out a positive multiple of π.
    pub fn exactly_not_pi_multiple(&self) -> bool {
        match self.expr {
            LengthExpr::Rational(_) | LengthExpr::SqrtRational(_) => true,
            LengthExpr::PiRational(r) => !(r.is_integer() && *r.numer() >= 1),
            LengthExpr::Float => false,
        }
    }

    /// Double-double value of the length.
    pub fn to_dd(&self) -> TwoFloat {
        match self.expr {
            LengthExpr::Float => TwoFloat::from(self.value),
            LengthExpr::Rational(r) => ratio_dd(r),
            LengthExpr::PiRational(r) => twofloat::consts::PI * ratio_dd(r),
            LengthExpr::SqrtRational(r) => ratio_dd(r).sqrt(),
        }
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal)
    }
}

impl std::str::FromStr for Length {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Length::parse(s)
    }
}

impl From<f64> for Length {
    fn from(v: f64) -> Self {
        Length::from_f64(v)
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.expr {
            LengthExpr::Float => serializer.serialize_f64(self.value),
            _ => serializer.serialize_str(&self.literal),
        }
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LengthVisitor;
        impl Visitor<'_> for LengthVisitor {
            type Value = Length;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a length literal such as \"pi*1/2\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Length, E> {
                Ok(Length::from_f64(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Length, E> {
                Ok(Length::rational(v, 1))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Length, E> {
                i64::try_from(v).map(|v| Length::rational(v, 1)).map_err(|_| E::custom("length out of range"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Length, E> {
                Length::parse(v).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(LengthVisitor)
    }
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio_dd(r: Ratio<i64>) -> TwoFloat {
    TwoFloat::from(*r.numer()) / TwoFloat::from(*r.denom())
}

fn is_square(n: i64) -> bool {
    if n < 0 {
        return false;
    }
    let r = (n as f64).sqrt().round() as i64;
    (r - 1..=r + 1).any(|k| k >= 0 && k.checked_mul(k) == Some(n))
}

/// Integer, `a/b`, or terminating decimal, with optional sign.
fn parse_ratio(s: &str) -> Option<Ratio<i64>> {
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = parse_decimal(n)?;
        let d = parse_decimal(d)?;
        if *d.numer() == 0 {
            return None;
        }
        return Some(n / d);
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Option<Ratio<i64>> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: i64 = digits.parse().ok()?;
    let denom = 10i64.checked_pow(frac.len() as u32)?;
    let r = Ratio::new(numer, denom);
    Some(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!(Length::parse("pi").unwrap().exact_pi_multiple(), Some(1));
        assert_eq!(Length::parse("pi*2").unwrap().exact_pi_multiple(), Some(2));
        assert_eq!(Length::parse("3*pi").unwrap().exact_pi_multiple(), Some(3));
        assert_eq!(Length::parse("pi*1/2").unwrap().exact_pi_multiple(), None);
        assert!((Length::parse("pi/2").unwrap().value() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(Length::parse("1/2").unwrap().is_rational());
        assert!(Length::parse("0.25").unwrap().is_rational());
        assert!(!Length::parse("sqrt(2)").unwrap().is_rational());
        assert!(Length::parse("sqrt(4/9)").unwrap().is_rational());
        assert_eq!(Length::parse("1e-3").unwrap().expr(), LengthExpr::Float);
        assert!(Length::parse("pie").is_err());
        assert!(Length::parse("sqrt(-2)").is_err());
    }

    #[test]
    fn dd_sqrt_two() {
        let l = Length::parse("sqrt(2)").unwrap().to_dd();
        let sq = l * l - TwoFloat::from(2.0);
        assert!(f64::from(sq).abs() < 1e-30);
    }

    #[test]
    fn serde_roundtrip() {
        let l: Length = serde_json::from_str("\"pi*1/3\"").unwrap();
        assert_eq!(serde_json::to_string(&l).unwrap(), "\"pi*1/3\"");
        let f: Length = serde_json::from_str("2.5").unwrap();
        assert_eq!(f.expr(), LengthExpr::Float);
        let i: Length = serde_json::from_str("2").unwrap();
        assert!(i.is_rational());
    }
}
