//! Attribute datatypes and runtime values.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::StoreError;

/// Declared attribute datatype.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Datatype {
    Int,
    IntUnsigned,
    /// `decimal(n, m)`: n total digits, m fractional digits.
    Decimal(u8, u8),
    Char(u32),
    Varchar(u32),
    Date,
    Datetime,
    Year,
    Enum(Vec<String>),
    Double,
    /// Placeholder for universal-set attributes until matched against a
    /// concrete operand.
    Any,
}

impl Datatype {
    pub fn is_any(&self) -> bool {
        matches!(self, Datatype::Any)
    }

    /// Two datatypes are compatible when equal or when either side is `Any`.
    pub fn compatible(&self, other: &Datatype) -> bool {
        self.is_any() || other.is_any() || self == other
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datatype::Int => write!(f, "int"),
            Datatype::IntUnsigned => write!(f, "int unsigned"),
            Datatype::Decimal(n, m) => write!(f, "decimal({n},{m})"),
            Datatype::Char(n) => write!(f, "char({n})"),
            Datatype::Varchar(n) => write!(f, "varchar({n})"),
            Datatype::Date => write!(f, "date"),
            Datatype::Datetime => write!(f, "datetime"),
            Datatype::Year => write!(f, "year"),
            Datatype::Enum(vals) => {
                write!(f, "enum(")?;
                for (i, v) in vals.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "'{v}'")?;
                }
                write!(f, ")")
            }
            Datatype::Double => write!(f, "double"),
            Datatype::Any => write!(f, "any"),
        }
    }
}

/// A runtime attribute value.
///
/// Decimals are stored as scaled integer units so that rows hash and compare
/// exactly. All arithmetic on decimals happens in double precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Null,
    Int(i64),
    Double(f64),
    Decimal { units: i64, scale: u8 },
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Numeric view, if the value is numeric.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Double(d) => Some(*d),
            Value::Decimal { units, scale } => Some(*units as f64 / 10f64.powi(*scale as i32)),
            _ => None,
        }
    }

    /// Comparison used by conditions. Returns `None` when either side is
    /// null (two-valued logic: such comparisons are false).
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        use Value::*;
        match (self, other) {
            (Null, _) | (_, Null) => None,
            (Str(a), Str(b)) => Some(a.cmp(b)),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Some(x.total_cmp(&y)),
                // Mixed number/string: compare the number's decimal rendering
                // lexicographically. This makes `year <= date` behave as
                // comparing the year against the date's year.
                _ => Some(a.to_string().cmp(&b.to_string())),
            },
        }
    }

    /// Total ordering for deterministic display; nulls sort first.
    pub fn total_order(&self, other: &Value) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Null, _) => Ordering::Less,
            (_, Null) => Ordering::Greater,
            (a, b) => a.compare(b).unwrap_or(Ordering::Equal),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Null, Null) => true,
            (Int(a), Int(b)) => a == b,
            (Double(a), Double(b)) => a.to_bits() == b.to_bits(),
            (Decimal { units: a, scale: s }, Decimal { units: b, scale: t }) => {
                a == b && s == t
            }
            (Str(a), Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Int(i) => {
                1u8.hash(state);
                i.hash(state);
            }
            Value::Double(d) => {
                2u8.hash(state);
                d.to_bits().hash(state);
            }
            Value::Decimal { units, scale } => {
                3u8.hash(state);
                units.hash(state);
                scale.hash(state);
            }
            Value::Str(s) => {
                4u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "null"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d}"),
            Value::Decimal { units, scale } => {
                if *scale == 0 {
                    return write!(f, "{units}");
                }
                let pow = 10i64.pow(*scale as u32);
                let sign = if *units < 0 { "-" } else { "" };
                let abs = units.unsigned_abs() as i64;
                write!(f, "{sign}{}.{:0width$}", abs / pow, abs % pow, width = *scale as usize)
            }
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

fn looks_like_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

fn looks_like_datetime(s: &str) -> bool {
    if s.len() != 19 {
        return false;
    }
    let (d, t) = s.split_at(10);
    let tb = t.as_bytes();
    looks_like_date(d)
        && tb[0] == b' '
        && tb[3] == b':'
        && tb[6] == b':'
        && tb.iter().skip(1).enumerate().all(|(i, c)| {
            let i = i + 1;
            i == 3 || i == 6 || c.is_ascii_digit()
        })
}

/// Check a value against a datatype, coercing where the model allows it
/// (ints into doubles and decimals, numeric strings are not coerced).
pub fn conform(value: &Value, datatype: &Datatype, attr: &str) -> Result<Value, StoreError> {
    let bad = || StoreError::DomainViolation {
        attr: attr.to_string(),
        datatype: datatype.to_string(),
        value: value.to_string(),
    };
    if value.is_null() {
        return Ok(Value::Null);
    }
    match datatype {
        Datatype::Any => Ok(value.clone()),
        Datatype::Int => match value {
            Value::Int(i) if i32::try_from(*i).is_ok() => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::IntUnsigned => match value {
            Value::Int(i) if *i >= 0 && *i <= u32::MAX as i64 => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::Year => match value {
            Value::Int(i) if (0..=9999).contains(i) => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::Double => match value {
            Value::Double(_) => Ok(value.clone()),
            Value::Int(i) => Ok(Value::Double(*i as f64)),
            Value::Decimal { .. } => Ok(Value::Double(value.as_f64().unwrap())),
            _ => Err(bad()),
        },
        Datatype::Decimal(n, m) => {
            let x = value.as_f64().ok_or_else(bad)?;
            let pow = 10f64.powi(*m as i32);
            let units = (x * pow).round();
            if (units - x * pow).abs() > 1e-6 {
                return Err(bad());
            }
            let units = units as i64;
            let digits = 10i64.checked_pow(*n as u32).ok_or_else(bad)?;
            if units.abs() >= digits {
                return Err(bad());
            }
            Ok(Value::Decimal { units, scale: *m })
        }
        Datatype::Char(n) | Datatype::Varchar(n) => match value {
            Value::Str(s) if s.chars().count() <= *n as usize => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::Date => match value {
            Value::Str(s) if looks_like_date(s) => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::Datetime => match value {
            Value::Str(s) if looks_like_datetime(s) => Ok(value.clone()),
            _ => Err(bad()),
        },
        Datatype::Enum(vals) => match value {
            Value::Str(s) if vals.iter().any(|v| v == s) => Ok(value.clone()),
            _ => Err(bad()),
        },
    }
}
