//! Fixed-point prices in integer ten-thousandths of a currency unit.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Number of price ticks per currency unit.
pub const PRICE_SCALE: i64 = 10_000;

/// A price stored as an integer count of 0.0001 currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(pub i64);

impl Price {
    pub const ZERO: Price = Price(0);

    pub fn from_ticks(ticks: i64) -> Self {
        Price(ticks)
    }

    pub fn ticks(self) -> i64 {
        self.0
    }

    /// Nearest representable price; used by the synthetic generator.
    pub fn from_f64(value: f64) -> Self {
        Price((value * PRICE_SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / PRICE_SCALE as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = PRICE_SCALE as u64;
        write!(f, "{sign}{}.{:04}", abs / scale, abs % scale)
    }
}

impl FromStr for Price {
    type Err = Error;

    /// Parses a plain decimal string without going through floating point.
    /// Digits beyond the fourth decimal place are rounded half away from zero.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Malformed(format!("invalid price {s:?}"));
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let mut frac: i64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            let d = (b - b'0') as i64;
            match i {
                0..=3 => frac = frac * 10 + d,
                4 => {
                    if d >= 5 {
                        frac += 1;
                    }
                }
                _ => {}
            }
        }
        for _ in frac_part.len()..4 {
            frac *= 10;
        }
        let ticks = whole
            .checked_mul(PRICE_SCALE)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(bad)?;
        Ok(Price(if neg { -ticks } else { ticks }))
    }
}
