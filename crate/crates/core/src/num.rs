//! Exact rational helpers.
//!
//! Every probability in the crate is a [`Rational`]. Floating point only shows
//! up when a value is emitted for display or machine output.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `num / den`; panics on a zero denominator, so callers check first.
pub fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Parses a plain decimal literal (`"0.489"`, `"-1.5"`, `"7"`, `"2.5e-3"`)
/// into the exact rational it denotes.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = match digits.split_once('.') {
        Some((w, f)) => (w, f),
        None => (digits, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{whole}{frac}");
    let mut numer: BigInt = if all_digits.is_empty() {
        BigInt::zero()
    } else {
        all_digits.parse().ok()?
    };
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Exact decimal value of the shortest representation of `x`, i.e. the value
/// a human meant when writing `0.489` in a JSON document.
pub fn from_f64_decimal(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    parse_decimal(&format!("{x}"))
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Canonical `p/q` rendering (`"279/1000"`, `"0"`, `"-1/5"`).
pub fn to_exact_string(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_exact(text: &str) -> Option<Rational> {
    match text.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Rational::new(n, d))
            }
        }
        None => text.trim().parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

/// Three decimals, trailing zeros dropped: `0.279`, `0.49`, `3.584`, `1`.
pub fn display(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.3}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn display_rational(x: &Rational) -> String {
    display(to_f64(x))
}

pub fn in_unit_interval(x: &Rational) -> bool {
    !x.is_negative() && *x <= one()
}

pub(crate) fn check_probability(field: &str, x: &Rational) -> Result<()> {
    if in_unit_interval(x) {
        Ok(())
    } else {
        Err(Error::Value {
            field: field.to_string(),
            message: format!("{} is not a probability", to_exact_string(x)),
        })
    }
}

/// The `f64` whose shortest decimal form is exactly `x`, if there is one.
pub fn exact_f64(x: &Rational) -> Option<f64> {
    let f = to_f64(x);
    (from_f64_decimal(f).as_ref() == Some(x)).then_some(f)
}

/// Serde adapter for probabilities: written as a JSON number when a decimal
/// literal represents the value exactly, otherwise as a `"p/q"` string.
/// Both forms are accepted on input, numbers taken as exact decimals.
pub mod serde_exact {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{exact_f64, from_f64_decimal, parse_exact, to_exact_string, Rational};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        match exact_f64(x) {
            Some(f) => s.serialize_f64(f),
            None => s.serialize_str(&to_exact_string(x)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let parsed = match Repr::deserialize(d)? {
            Repr::Number(f) => from_f64_decimal(f),
            Repr::Text(t) => parse_exact(&t).or_else(|| super::parse_decimal(&t)),
        };
        parsed.ok_or_else(|| serde::de::Error::custom("expected a finite number or \"p/q\" string"))
    }
}
