//! Reals extended with a single `-inf` sentinel.
//!
//! Contrasts such as `log f` may legitimately take the value `-inf` (a null
//! mixing measure, or a density vanishing at an observation). The sentinel
//! orders strictly below every finite value, so argmax searches never pick it
//! while a finite candidate exists.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    NegInfinity,
    Finite(f64),
}

impl ExtendedReal {
    /// Maps `-inf` to the sentinel. NaN and `+inf` are not representable.
    pub fn from_f64(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value != f64::INFINITY);
        if value == f64::NEG_INFINITY {
            ExtendedReal::NegInfinity
        } else {
            ExtendedReal::Finite(value)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::NegInfinity => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::NegInfinity => f64::NEG_INFINITY,
        }
    }
}

impl Eq for ExtendedReal {}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtendedReal::*;
        match (self, other) {
            (NegInfinity, NegInfinity) => Ordering::Equal,
            (NegInfinity, Finite(_)) => Ordering::Less,
            (Finite(_), NegInfinity) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl Add<f64> for ExtendedReal {
    type Output = ExtendedReal;

    fn add(self, rhs: f64) -> ExtendedReal {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(v + rhs),
            ExtendedReal::NegInfinity => ExtendedReal::NegInfinity,
        }
    }
}

impl Sub<f64> for ExtendedReal {
    type Output = ExtendedReal;

    fn sub(self, rhs: f64) -> ExtendedReal {
        self + (-rhs)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::NegInfinity => f.write_str("-inf"),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => serializer.serialize_f64(*v),
            ExtendedReal::NegInfinity => serializer.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(ExtendedReal::Finite(v)),
            Repr::Text(t) if t == "-inf" => Ok(ExtendedReal::NegInfinity),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"-inf\", got \"{t}\""))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_orders_below_every_finite_value() {
        let values = [f64::MIN, -1e300, 0.0, 1.0];
        for v in values {
            assert!(ExtendedReal::NegInfinity < ExtendedReal::Finite(v));
        }
        assert_eq!(ExtendedReal::from_f64(f64::NEG_INFINITY), ExtendedReal::NegInfinity);
    }

    #[test]
    fn max_prefers_finite() {
        let xs = [
            ExtendedReal::NegInfinity,
            ExtendedReal::Finite(-1e9),
            ExtendedReal::NegInfinity,
        ];
        assert_eq!(xs.iter().max(), Some(&ExtendedReal::Finite(-1e9)));
    }

    #[test]
    fn arithmetic_absorbs_sentinel() {
        assert_eq!(ExtendedReal::NegInfinity + 5.0, ExtendedReal::NegInfinity);
        assert_eq!(ExtendedReal::Finite(1.0) - 0.5, ExtendedReal::Finite(0.5));
    }
}
