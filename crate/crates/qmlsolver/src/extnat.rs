//! Natural numbers extended with ℵ₀.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtNat {
    Fin(u64),
    Aleph0,
}

pub use ExtNat::{Aleph0, Fin};

impl ExtNat {
    pub const ZERO: ExtNat = Fin(0);
    pub const ONE: ExtNat = Fin(1);

    pub fn is_zero(self) -> bool {
        self == Fin(0)
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Fin(_))
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Fin(n) => Some(n),
            Aleph0 => None,
        }
    }

    /// Finite value, with ℵ₀ replaced by `cap`.
    pub fn capped(self, cap: u64) -> u64 {
        match self {
            Fin(n) => n,
            Aleph0 => cap,
        }
    }

    /// Truncated subtraction; ℵ₀ − n = ℵ₀ for finite n.
    pub fn saturating_sub(self, n: u64) -> ExtNat {
        match self {
            Fin(m) => Fin(m.saturating_sub(n)),
            Aleph0 => Aleph0,
        }
    }
}

impl Add for ExtNat {
    type Output = ExtNat;
    fn add(self, o: ExtNat) -> ExtNat {
        match (self, o) {
            (Fin(a), Fin(b)) => a.checked_add(b).map(Fin).unwrap_or(Aleph0),
            _ => Aleph0,
        }
    }
}

impl Mul for ExtNat {
    type Output = ExtNat;
    fn mul(self, o: ExtNat) -> ExtNat {
        match (self, o) {
            (Fin(0), _) | (_, Fin(0)) => Fin(0),
            (Fin(a), Fin(b)) => a.checked_mul(b).map(Fin).unwrap_or(Aleph0),
            _ => Aleph0,
        }
    }
}

impl Sum for ExtNat {
    fn sum<I: Iterator<Item = ExtNat>>(it: I) -> ExtNat {
        it.fold(Fin(0), Add::add)
    }
}

impl From<u64> for ExtNat {
    fn from(n: u64) -> ExtNat {
        Fin(n)
    }
}

impl fmt::Display for ExtNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fin(n) => write!(f, "{n}"),
            Aleph0 => f.write_str("aleph0"),
        }
    }
}

impl serde::Serialize for ExtNat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Fin(n) => s.serialize_u64(*n),
            Aleph0 => s.serialize_str("aleph0"),
        }
    }
}
