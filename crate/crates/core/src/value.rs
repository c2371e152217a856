use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Kind of a column or value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Int,
    Rat,
    Str,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Int | Kind::Rat)
    }

    /// Kinds that can be compared with each other.
    pub fn comparable(self, other: Kind) -> bool {
        self.is_numeric() == other.is_numeric()
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Int => "int",
            Kind::Rat => "rat",
            Kind::Str => "str",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        match s {
            "int" | "integer" => Some(Kind::Int),
            "rat" | "rational" | "num" | "numeric" => Some(Kind::Rat),
            "str" | "string" | "text" => Some(Kind::Str),
            _ => None,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single value. Rationals with denominator one are always stored as `Int`
/// (when they fit), so structural and numeric equality coincide.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Rat(BigRational),
    Str(String),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(s.to_string())
    }

    /// Normalizing constructor for rationals.
    pub fn rat(r: BigRational) -> Value {
        if r.is_integer() {
            if let Some(i) = r.to_integer().to_i64() {
                return Value::Int(i);
            }
        }
        Value::Rat(r)
    }

    pub fn from_big(i: BigInt) -> Value {
        match i.to_i64() {
            Some(v) => Value::Int(v),
            None => Value::Rat(BigRational::from_integer(i)),
        }
    }

    pub fn kind(&self) -> Option<Kind> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(Kind::Int),
            Value::Rat(_) => Some(Kind::Rat),
            Value::Str(_) => Some(Kind::Str),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Rat(_))
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        match self {
            Value::Int(i) => Some(BigRational::from_integer(BigInt::from(*i))),
            Value::Rat(r) => Some(r.clone()),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Whether two values can be ordered against each other (nulls never can).
    pub fn comparable(&self, other: &Value) -> bool {
        (self.is_numeric() && other.is_numeric())
            || (matches!(self, Value::Str(_)) && matches!(other, Value::Str(_)))
    }

    pub fn add(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => match a.checked_add(*b) {
                Some(v) => Value::Int(v),
                None => Value::from_big(BigInt::from(*a) + BigInt::from(*b)),
            },
            (a, b) => match (a.to_rational(), b.to_rational()) {
                (Some(x), Some(y)) => Value::rat(x + y),
                _ => Value::Null,
            },
        }
    }

    pub fn neg(&self) -> Value {
        match self {
            Value::Int(a) => match a.checked_neg() {
                Some(v) => Value::Int(v),
                None => Value::from_big(-BigInt::from(*a)),
            },
            Value::Rat(r) => Value::rat(-r.clone()),
            _ => Value::Null,
        }
    }

    pub fn sub(&self, other: &Value) -> Value {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => match a.checked_mul(*b) {
                Some(v) => Value::Int(v),
                None => Value::from_big(BigInt::from(*a) * BigInt::from(*b)),
            },
            (a, b) => match (a.to_rational(), b.to_rational()) {
                (Some(x), Some(y)) => Value::rat(x * y),
                _ => Value::Null,
            },
        }
    }

    /// Division by a nonzero numeric; `None` on zero or non-numeric input.
    pub fn div(&self, other: &Value) -> Option<Value> {
        let x = self.to_rational()?;
        let y = other.to_rational()?;
        if y.is_zero() {
            return None;
        }
        Some(Value::rat(x / y))
    }

    /// Rendering as a literal of the textual algebra.
    pub fn literal(&self) -> String {
        match self {
            Value::Null => "null".to_string(),
            Value::Int(i) => i.to_string(),
            Value::Rat(r) => {
                if r.is_negative() {
                    alloc::format!("-{}/{}", -r.numer().clone(), r.denom())
                } else {
                    alloc::format!("{}/{}", r.numer(), r.denom())
                }
            }
            Value::Str(s) => {
                let mut out = String::with_capacity(s.len() + 2);
                out.push('\'');
                for c in s.chars() {
                    if c == '\'' {
                        out.push('\'');
                    }
                    out.push(c);
                }
                out.push('\'');
                out
            }
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Rat(_) => 1,
            Value::Str(_) => 2,
        }
    }
}

/// Numeric rational -> decimal-ish display used for result tables.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Rat(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Null, Value::Null) => Ordering::Equal,
            (a, b) if a.is_numeric() && b.is_numeric() => {
                a.to_rational().unwrap().cmp(&b.to_rational().unwrap())
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl core::hash::Hash for Value {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Int(i) => {
                1u8.hash(state);
                i.hash(state);
            }
            Value::Rat(r) => {
                1u8.hash(state);
                r.hash(state);
            }
            Value::Str(s) => {
                2u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

/// Parses a numeric literal such as `12`, `-3`, `2.5` or `7/3`.
pub fn parse_number(s: &str) -> Option<Value> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Value::rat(BigRational::new(n, d)));
    }
    if let Ok(i) = s.parse::<i64>() {
        return Some(Value::Int(i));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = alloc::format!("{int_part}{frac_part}0").parse().ok()?;
    let mut denom = BigInt::from(10);
    for _ in 0..frac_part.len() {
        denom *= 10;
    }
    let mut r = BigRational::new(digits, denom);
    if neg {
        r = -r;
    }
    Some(Value::rat(r))
}

#[cfg(test)]
pub(crate) fn rat_int(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}
