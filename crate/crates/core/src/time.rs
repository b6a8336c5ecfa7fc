//! Simulation time in integer nanoseconds.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("time arithmetic overflow")]
    Overflow,
    #[error("time arithmetic underflow ({lhs} - {rhs})")]
    Underflow { lhs: SimTime, rhs: SimTime },
    #[error("rate must be positive")]
    ZeroRate,
    #[error("cannot parse duration `{0}` (expected e.g. \"1ms\", \"100ns\", \"10s\")")]
    Parse(String),
}

/// Nanoseconds since simulation start. Also used for durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn checked_add(self, rhs: SimTime) -> Result<SimTime, TimeError> {
        self.0.checked_add(rhs.0).map(SimTime).ok_or(TimeError::Overflow)
    }

    pub fn checked_sub(self, rhs: SimTime) -> Result<SimTime, TimeError> {
        self.0
            .checked_sub(rhs.0)
            .map(SimTime)
            .ok_or(TimeError::Underflow { lhs: self, rhs })
    }

    pub fn checked_mul(self, k: u64) -> Result<SimTime, TimeError> {
        self.0.checked_mul(k).map(SimTime).ok_or(TimeError::Overflow)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

// The operators panic instead of wrapping. Code that handles untrusted
// magnitudes uses the checked_* forms.
impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        self.checked_add(rhs).expect("SimTime overflow")
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        match self.checked_sub(rhs) {
            Ok(t) => t,
            Err(e) => panic!("{e}"),
        }
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns != 0 && ns.is_multiple_of(NANOS_PER_SEC) {
            write!(f, "{}s", ns / NANOS_PER_SEC)
        } else if ns != 0 && ns.is_multiple_of(1_000_000) {
            write!(f, "{}ms", ns / 1_000_000)
        } else if ns != 0 && ns.is_multiple_of(1_000) {
            write!(f, "{}us", ns / 1_000)
        } else {
            write!(f, "{ns}ns")
        }
    }
}

impl FromStr for SimTime {
    type Err = TimeError;

    /// Accepts `<number><unit>` with unit one of `ns`, `us`, `µs`, `ms`, `s`.
    /// Fractional numbers are allowed as long as the result is a whole
    /// number of nanoseconds ("0.1us" is fine, "0.5ns" is not).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeError::Parse(s.to_string());
        let t = s.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .ok_or_else(err)?;
        let (num, unit) = t.split_at(split);
        let scale: u64 = match unit.trim() {
            "ns" => 1,
            "us" | "µs" | "μs" => 1_000,
            "ms" => 1_000_000,
            "s" => NANOS_PER_SEC,
            _ => return Err(err()),
        };
        if num.is_empty() {
            return Err(err());
        }
        let (int_part, frac_part) = match num.split_once('.') {
            Some((i, f)) => (i, f),
            None => (num, ""),
        };
        if frac_part.contains('.') || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(err());
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err())?
        };
        let mut total = int.checked_mul(scale).ok_or(TimeError::Overflow)?;
        if !frac_part.is_empty() {
            // Exact decimal scaling: frac * scale / 10^digits must be integral.
            let digits = frac_part.len() as u32;
            let frac: u128 = frac_part.parse().map_err(|_| err())?;
            let denom = 10u128.checked_pow(digits).ok_or_else(err)?;
            let scaled = frac * scale as u128;
            if !scaled.is_multiple_of(denom) {
                return Err(err());
            }
            let add = u64::try_from(scaled / denom).map_err(|_| TimeError::Overflow)?;
            total = total.checked_add(add).ok_or(TimeError::Overflow)?;
        }
        Ok(SimTime(total))
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serialization time of `bytes` at `rate_bps`, rounded up to the next
/// nanosecond.
pub fn bytes_to_duration(bytes: u64, rate_bps: u64) -> Result<SimTime, TimeError> {
    if rate_bps == 0 {
        return Err(TimeError::ZeroRate);
    }
    let bits = (bytes as u128) * 8 * NANOS_PER_SEC as u128;
    let ns = bits.div_ceil(rate_bps as u128);
    u64::try_from(ns).map(SimTime).map_err(|_| TimeError::Overflow)
}

/// Largest byte count whose serialization fits in `window`.
pub fn duration_to_bytes(window: SimTime, rate_bps: u64) -> u64 {
    let bytes = (window.0 as u128) * rate_bps as u128 / (8 * NANOS_PER_SEC as u128);
    u64::try_from(bytes).unwrap_or(u64::MAX)
}
