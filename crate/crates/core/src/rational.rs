//! Exact rational helpers and the `"p/q"` string encoding used in every JSON dump.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

pub type Rational = BigRational;

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(q: &Rational) -> f64 {
    if let Some(v) = q.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Huge numerators and denominators: scale both down by the same power of two.
    let n = q.numer();
    let d = q.denom();
    let shift = n.bits().max(d.bits()).saturating_sub(1000) as usize;
    let ns = (n >> shift).to_f64().unwrap_or(0.0);
    let ds = (d >> shift).to_f64().unwrap_or(f64::INFINITY);
    ns / ds
}

/// `1/2^n` exactly.
pub fn pow2_inv(n: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << n as usize)
}

pub fn pow(q: &Rational, n: u32) -> Rational {
    num::pow::pow(q.clone(), n as usize)
}

/// Largest rational with the given denominator that does not exceed `x`.
pub fn floor_to_denominator(x: f64, denom: i64) -> Rational {
    rat((x * denom as f64).floor() as i64, denom)
}

pub fn format(q: &Rational) -> String {
    if q.denom().is_one() {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rational {0:?}; expected \"p/q\" or an integer")]
pub struct ParseRationalError(pub String);

pub fn parse(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| err())?;
            let q: BigInt = q.trim().parse().map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| err())?)),
    }
}

/// The rational written by the shortest decimal form of `x`, so `0.3` gives `3/10`.
pub fn from_decimal(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x}");
    let (int_part, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int_part}{frac}").parse().ok()?;
    Some(Rational::new(digits, num::pow::pow(BigInt::from(10), frac.len())))
}

pub fn is_nonnegative(q: &Rational) -> bool {
    !q.is_negative()
}

/// Serde adapter: rationals as `"p/q"` strings.
pub mod as_string {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Option<Rational>`.
pub mod opt_string {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&format(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| parse(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// A number that is either exact or a float; serialized as `"p/q"` or a JSON number.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(Rational),
    Float(f64),
}

impl Scalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(q) => to_f64(q),
            Scalar::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Float(_) => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) => f.write_str(&format(q)),
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Exact(q) => s.serialize_str(&format(q)),
            Scalar::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => parse(&s).map(Scalar::Exact).map_err(serde::de::Error::custom),
            Raw::Num(x) => Ok(Scalar::Float(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse("7").unwrap(), int(7));
        assert_eq!(format(&rat(2, 4)), "1/2");
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
    }

    #[test]
    fn decimals() {
        assert_eq!(from_decimal(0.3), Some(rat(3, 10)));
        assert_eq!(from_decimal(2.0), Some(int(2)));
        assert_eq!(from_decimal(-0.125), Some(rat(-1, 8)));
        assert_eq!(from_decimal(f64::NAN), None);
    }

    #[test]
    fn huge_to_f64() {
        let q = pow2_inv(3000) * pow(&int(2), 2999);
        assert!((to_f64(&q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_json() {
        let v = serde_json::to_string(&vec![Scalar::Exact(rat(1, 3)), Scalar::Float(0.25)]).unwrap();
        assert_eq!(v, r#"["1/3",0.25]"#);
        let back: Vec<Scalar> = serde_json::from_str(&v).unwrap();
        assert_eq!(back[0], Scalar::Exact(rat(1, 3)));
    }
}
