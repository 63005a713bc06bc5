//! Simulated time and unit-suffixed quantity parsing.
//!
//! Config files and CLI flags carry explicit units (`80uA`, `12.2mA`, `2s`,
//! `100ms`, `45Ah`, `500kbit/s`). Parsing is strict: a missing or unknown
//! unit is an error, never a silent default.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or span on the simulation clock, in whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);
    pub const MAX: Micros = Micros(u64::MAX);

    pub const fn from_millis(ms: u64) -> Self {
        Micros(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Micros(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative input saturates at zero.
    pub fn from_secs_f64(s: f64) -> Self {
        Micros((s * 1e6).round().max(0.0) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_hours_f64(self) -> f64 {
        self.0 as f64 / 3.6e9
    }

    pub fn saturating_sub(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl fmt::Display for Micros {
    /// `seconds.micros`, the candump timestamp layout.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("`{0}` has no numeric value")]
    NoNumber(String),
    #[error("`{input}` has unit `{unit}`; expected one of {expected}")]
    BadUnit {
        input: String,
        unit: String,
        expected: &'static str,
    },
    #[error("`{0}` must be finite and non-negative")]
    OutOfRange(String),
}

fn split_number(input: &str) -> Result<(f64, &str), UnitError> {
    let s = input.trim();
    let end = s
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    // an exponent marker directly followed by a unit letter belongs to the unit
    let (mut num, mut unit) = s.split_at(end);
    if num.ends_with(['e', 'E']) {
        num = &num[..num.len() - 1];
        unit = &s[num.len()..];
    }
    let value: f64 = num.parse().map_err(|_| UnitError::NoNumber(input.to_string()))?;
    if !value.is_finite() || value < 0.0 {
        return Err(UnitError::OutOfRange(input.to_string()));
    }
    Ok((value, unit.trim()))
}

fn scaled(input: &str, table: &[(&str, f64)], expected: &'static str) -> Result<f64, UnitError> {
    let (value, unit) = split_number(input)?;
    table
        .iter()
        .find(|(name, _)| *name == unit)
        .map(|(_, scale)| value * scale)
        .ok_or_else(|| UnitError::BadUnit {
            input: input.to_string(),
            unit: unit.to_string(),
            expected,
        })
}

/// Parses a current into amperes.
pub fn parse_current(input: &str) -> Result<f64, UnitError> {
    scaled(input, &[("A", 1.0), ("mA", 1e-3), ("uA", 1e-6), ("µA", 1e-6)], "A, mA, uA")
}

/// Parses a duration into microseconds.
pub fn parse_duration(input: &str) -> Result<Micros, UnitError> {
    let secs = scaled(
        input,
        &[
            ("us", 1e-6),
            ("µs", 1e-6),
            ("ms", 1e-3),
            ("s", 1.0),
            ("min", 60.0),
            ("h", 3600.0),
            ("d", 86400.0),
        ],
        "us, ms, s, min, h, d",
    )?;
    Ok(Micros::from_secs_f64(secs))
}

/// Parses a duration into fractional microseconds (wake-up filter windows
/// are sub-microsecond).
pub fn parse_fine_duration_us(input: &str) -> Result<f64, UnitError> {
    scaled(input, &[("ns", 1e-3), ("us", 1.0), ("µs", 1.0), ("ms", 1e3)], "ns, us, ms")
}

/// Parses a charge into ampere-hours.
pub fn parse_charge(input: &str) -> Result<f64, UnitError> {
    scaled(input, &[("Ah", 1.0), ("mAh", 1e-3)], "Ah, mAh")
}

/// Parses a bit rate into bits per second.
pub fn parse_bitrate(input: &str) -> Result<u32, UnitError> {
    let bps = scaled(
        input,
        &[
            ("bit/s", 1.0),
            ("kbit/s", 1e3),
            ("Mbit/s", 1e6),
            ("bps", 1.0),
            ("kbps", 1e3),
            ("Mbps", 1e6),
        ],
        "bit/s, kbit/s, Mbit/s",
    )?;
    if bps < 1.0 || bps > u32::MAX as f64 {
        return Err(UnitError::OutOfRange(input.to_string()));
    }
    Ok(bps.round() as u32)
}

/// Formats a duration compactly, using the largest unit that divides it.
pub fn format_duration(d: Micros) -> String {
    let us = d.0;
    if us == 0 {
        return "0s".into();
    }
    for (unit, scale) in [("h", 3_600_000_000u64), ("min", 60_000_000), ("s", 1_000_000), ("ms", 1_000)] {
        if us.is_multiple_of(scale) {
            return format!("{}{}", us / scale, unit);
        }
    }
    format!("{us}us")
}
