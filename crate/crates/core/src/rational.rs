//! Exact rational helpers shared by the oracle, the adapter and the CLI.

use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

/// Exact rational used wherever a fraction must compare for equality.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {0:?} (expected `p/q` or an integer)")]
pub struct ParseRationalError(pub String);

/// Parses `p/q` or a bare integer.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p = i128::from_str(p.trim()).map_err(|_| err())?;
            let q = i128::from_str(q.trim()).map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            Ok(Rational::new(p, q))
        }
        None => i128::from_str(s)
            .map(Rational::from_integer)
            .map_err(|_| err()),
    }
}

/// Parses a plain decimal literal such as `0.125` or `3` exactly.
pub fn parse_decimal(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let t = s.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 30 {
        return Err(err());
    }
    let digits = format!("{int}{frac}");
    let numer = i128::from_str(&digits).map_err(|_| err())?;
    let denom = 10i128.checked_pow(frac.len() as u32).ok_or_else(err)?;
    let r = Rational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Converts a finite float through its shortest decimal rendering, so that
/// `0.1` becomes exactly `1/10`.
pub fn from_f64_decimal(x: f64) -> Result<Rational, ParseRationalError> {
    if !x.is_finite() {
        return Err(ParseRationalError(x.to_string()));
    }
    parse_decimal(&x.to_string())
}

/// Renders `p/q`, or just `p` for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter storing a [`Rational`] as a `"p/q"` string.
pub mod serde_str {
    use super::{format_rational, parse_rational, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(D::Error::custom)
    }
}

/// Serde adapter reading either a JSON number (taken as its shortest decimal
/// rendering) or a `"p/q"` string; writes a number.
pub mod serde_num_or_str {
    use super::{from_f64_decimal, parse_rational, to_f64, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(to_f64(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Number(x) => from_f64_decimal(x).map_err(D::Error::custom),
            Raw::Text(s) => parse_rational(&s).map_err(D::Error::custom),
        }
    }
}
