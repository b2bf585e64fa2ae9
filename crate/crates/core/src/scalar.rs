//! Arithmetic modes.
//!
//! Every tree carries one of two number types: exact rationals (the default
//! for oracle work, where value = minimax = maximin must hold with equality)
//! or `f64` with a relative comparison tolerance (the default for lattices).

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Exact rational number used in rational mode.
pub type Rational = BigRational;

/// Default comparison tolerance for float mode.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Rational,
    Float,
}

impl Display for Arithmetic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arithmetic::Rational => f.write_str("rational"),
            Arithmetic::Float => f.write_str("float"),
        }
    }
}

impl FromStr for Arithmetic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rational" => Ok(Arithmetic::Rational),
            "float" => Ok(Arithmetic::Float),
            other => Err(format!("unknown arithmetic mode `{other}` (expected rational or float)")),
        }
    }
}

/// Number type a filtration tree is built over.
///
/// Comparisons that decide hitting sets or certificate verdicts go through
/// [`Scalar::tol_eq`] and [`Scalar::tol_le`]; rationals ignore the tolerance.
pub trait Scalar:
    Clone + PartialOrd + Signed + Debug + Display + Send + Sync + 'static
{
    const MODE: Arithmetic;

    fn from_i64(v: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// `a == b` within `tol * max(1, |a|, |b|)` in float mode, exactly otherwise.
    fn tol_eq(&self, other: &Self, tol: f64) -> bool;

    /// `a <= b` within `tol * max(1, |a|, |b|)` in float mode, exactly otherwise.
    fn tol_le(&self, other: &Self, tol: f64) -> bool;

    fn to_json(&self) -> Value;

    fn from_json(v: &Value) -> Result<Self, String>;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn tol_lt(&self, other: &Self, tol: f64) -> bool {
        !other.tol_le(self, tol)
    }
}

pub fn min<S: Scalar>(a: &S, b: &S) -> S {
    if b < a {
        b.clone()
    } else {
        a.clone()
    }
}

pub fn max<S: Scalar>(a: &S, b: &S) -> S {
    if b > a {
        b.clone()
    } else {
        a.clone()
    }
}

fn scale(a: f64, b: f64) -> f64 {
    1f64.max(a.abs()).max(b.abs())
}

impl Scalar for f64 {
    const MODE: Arithmetic = Arithmetic::Float;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn tol_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol * scale(*self, *other)
    }

    fn tol_le(&self, other: &Self, tol: f64) -> bool {
        *self <= *other + tol * scale(*self, *other)
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self).map(Value::Number).unwrap_or(Value::Null)
    }

    fn from_json(v: &Value) -> Result<Self, String> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| format!("number {n} out of range")),
            Value::String(s) => Err(format!(
                "string \"{s}\" in float mode (float mode accepts decimal numbers only)"
            )),
            other => Err(format!("expected a number, found {other}")),
        }
    }
}

impl Scalar for Rational {
    const MODE: Arithmetic = Arithmetic::Rational;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn tol_eq(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }

    fn tol_le(&self, other: &Self, _tol: f64) -> bool {
        self <= other
    }

    fn to_json(&self) -> Value {
        if self.is_integer() {
            if let Some(i) = self.numer().to_i64() {
                return Value::from(i);
            }
        }
        Value::String(self.to_string())
    }

    fn from_json(v: &Value) -> Result<Self, String> {
        match v {
            Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Self::from_i64(i)),
                None => Err(format!(
                    "decimal literal {n} in rational mode (use an integer or a \"p/q\" string)"
                )),
            },
            Value::String(s) => parse_rational(s),
            other => Err(format!("expected an integer or \"p/q\" string, found {other}")),
        }
    }
}

/// Parses `"n"` or `"p/q"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| format!("invalid rational literal \"{s}\""))?;
    let den: BigInt = den.parse().map_err(|_| format!("invalid rational literal \"{s}\""))?;
    if den.is_zero() {
        return Err(format!("zero denominator in \"{s}\""));
    }
    Ok(Rational::new(num, den))
}

/// Exact rational image of a finite float.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    <Rational as num_traits::FromPrimitive>::from_f64(v)
}
