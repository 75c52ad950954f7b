use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A 32-bit machine word. All arithmetic wraps modulo 2^32.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub u32);

impl Word {
    pub const ZERO: Word = Word(0);

    pub const fn new(v: u32) -> Word {
        Word(v)
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    /// Two's-complement wrapped addition.
    pub const fn wrapping_add(self, rhs: Word) -> Word {
        Word(self.0.wrapping_add(rhs.0))
    }

    pub const fn wrapping_sub(self, rhs: Word) -> Word {
        Word(self.0.wrapping_sub(rhs.0))
    }

    /// `0x0000000F` style, the on-disk and console representation.
    pub fn to_hex(self) -> String {
        format!("0x{:08X}", self.0)
    }

    /// Parses decimal or `0x` hex; a leading `-` negates modulo 2^32.
    pub fn parse_literal(s: &str) -> Result<Word, ParseWordError> {
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest.trim_start()),
            None => (false, s),
        };
        let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
            u32::from_str_radix(hex, 16)
        } else {
            body.parse::<u32>()
        }
        .map_err(|_| ParseWordError(s.to_string()))?;
        Ok(if neg { -Word(v) } else { Word(v) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid 32-bit word literal `{0}`")]
pub struct ParseWordError(pub String);

impl FromStr for Word {
    type Err = ParseWordError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Word::parse_literal(s)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08X}", self.0)
    }
}

impl From<u32> for Word {
    fn from(v: u32) -> Self {
        Word(v)
    }
}

impl Add for Word {
    type Output = Word;
    fn add(self, rhs: Word) -> Word {
        self.wrapping_add(rhs)
    }
}

impl Sub for Word {
    type Output = Word;
    fn sub(self, rhs: Word) -> Word {
        self.wrapping_sub(rhs)
    }
}

impl Neg for Word {
    type Output = Word;
    fn neg(self) -> Word {
        Word(self.0.wrapping_neg())
    }
}

impl AddAssign for Word {
    fn add_assign(&mut self, rhs: Word) {
        *self = *self + rhs;
    }
}

impl SubAssign for Word {
    fn sub_assign(&mut self, rhs: Word) {
        *self = *self - rhs;
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let hex = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| serde::de::Error::custom(format!("expected 0x-prefixed word, got `{s}`")))?;
        if hex.is_empty() || hex.len() > 8 {
            return Err(serde::de::Error::custom(format!("bad word `{s}`")));
        }
        u32::from_str_radix(hex, 16)
            .map(Word)
            .map_err(|_| serde::de::Error::custom(format!("bad word `{s}`")))
    }
}

/// `(p + q) mod 2^32`.
pub fn wrap_add(p: Word, q: Word) -> Word {
    p.wrapping_add(q)
}

/// True iff the wrapped difference `p - q` is negative as a signed word.
///
/// Shifting both sides by the same amount never changes the result, which is
/// what lets an offset be folded into instruction constants without altering
/// branch outcomes. Note the relation is not antisymmetric at distance 2^31.
pub fn lt_wrap(p: Word, q: Word) -> bool {
    p.0.wrapping_sub(q.0) & 0x8000_0000 != 0
}
