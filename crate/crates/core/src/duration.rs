//! Human-readable spans such as `3m`, `1.5y` or `90d`.
//!
//! Months and years use fixed day counts (30.44 and 365.25 days) so that
//! every threshold maps to an exact number of seconds.

use std::fmt;
use std::str::FromStr;

use chrono::TimeDelta;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_MONTH: f64 = 30.44;
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("empty duration")]
    Empty,
    #[error("invalid duration `{0}`: expected <number><unit> with unit one of s, h, d, w, m, y")]
    Invalid(String),
    #[error("duration `{0}` must be positive")]
    NotPositive(String),
}

/// A non-negative length of time with second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    seconds: i64,
    // Original spelling, kept so that reports echo what the user wrote.
    label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Label {
    milli_units: i64,
    unit: u8,
}

impl Span {
    pub fn from_seconds(seconds: i64) -> Self {
        Span {
            seconds,
            label: Label {
                milli_units: seconds * 1000,
                unit: b's',
            },
        }
    }

    pub fn days(days: f64) -> Self {
        Self::build(days, b'd')
    }

    pub fn months(months: f64) -> Self {
        Self::build(months, b'm')
    }

    pub fn years(years: f64) -> Self {
        Self::build(years, b'y')
    }

    fn build(amount: f64, unit: u8) -> Self {
        let factor = match unit {
            b's' => 1.0,
            b'h' => 3_600.0,
            b'd' => SECONDS_PER_DAY,
            b'w' => 7.0 * SECONDS_PER_DAY,
            b'm' => DAYS_PER_MONTH * SECONDS_PER_DAY,
            b'y' => DAYS_PER_YEAR * SECONDS_PER_DAY,
            _ => unreachable!("unit validated by caller"),
        };
        Span {
            seconds: (amount * factor).round() as i64,
            label: Label {
                milli_units: (amount * 1000.0).round() as i64,
                unit,
            },
        }
    }

    pub fn seconds(&self) -> i64 {
        self.seconds
    }

    pub fn as_delta(&self) -> TimeDelta {
        TimeDelta::seconds(self.seconds)
    }

    pub fn is_positive(&self) -> bool {
        self.seconds > 0
    }

    /// Parses a comma-separated list such as `3m,6m,1y`.
    pub fn parse_list(input: &str) -> Result<Vec<Span>, SpanError> {
        input
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for Span {
    type Err = SpanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(SpanError::Empty);
        }
        let unit = *s.as_bytes().last().unwrap();
        if !matches!(unit, b's' | b'h' | b'd' | b'w' | b'm' | b'y') {
            return Err(SpanError::Invalid(s.to_string()));
        }
        let amount: f64 = s[..s.len() - 1]
            .parse()
            .map_err(|_| SpanError::Invalid(s.to_string()))?;
        if !amount.is_finite() || amount < 0.0 {
            return Err(SpanError::Invalid(s.to_string()));
        }
        Ok(Self::build(amount, unit))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.label.milli_units / 1000;
        let frac = self.label.milli_units % 1000;
        if frac == 0 {
            write!(f, "{}{}", whole, self.label.unit as char)
        } else {
            let frac = format!("{:03}", frac);
            write!(
                f,
                "{}.{}{}",
                whole,
                frac.trim_end_matches('0'),
                self.label.unit as char
            )
        }
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
