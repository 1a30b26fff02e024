//! Trade ticks and averaging windows.
//!
//! A tick carries the triple (value, volume, price) tied by
//! `value = price * volume`. Windows are half-open intervals of nanosecond
//! timestamps so that adjacent windows tile a tape without double counting.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance accepted between a reported value and `price * volume`.
pub const VALUE_TOLERANCE: f64 = 1e-6;

/// Nanoseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_nanos(nanos: i64) -> Self {
        Timestamp(nanos)
    }

    pub fn nanos(self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeTick<T> {
    pub timestamp: Timestamp,
    pub price: T,
    pub volume: T,
    pub value: T,
}

fn check_positive<T: Scalar>(field: &'static str, x: T) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFiniteField {
            field,
            value: x.as_f64(),
        });
    }
    if x <= T::zero() {
        return Err(Error::NonPositiveField {
            field,
            value: x.as_f64(),
        });
    }
    Ok(())
}

/// Builds a validated tick. When `value` is omitted it is `price * volume`;
/// when supplied it is kept as reported, provided it agrees with the product
/// to within [`VALUE_TOLERANCE`].
pub fn make_tick<T: Scalar>(timestamp: Timestamp, price: T, volume: T, value: Option<T>) -> Result<TradeTick<T>> {
    check_positive("price", price)?;
    check_positive("volume", volume)?;
    let expected = price * volume;
    let value = match value {
        None => expected,
        Some(v) => {
            check_positive("value", v)?;
            if (v - expected).abs() / v > T::lit(VALUE_TOLERANCE) {
                return Err(Error::InconsistentValue {
                    value: v.as_f64(),
                    expected: expected.as_f64(),
                });
            }
            v
        }
    };
    Ok(TradeTick {
        timestamp,
        price,
        volume,
        value,
    })
}

impl<T: Scalar> TradeTick<T> {
    pub fn new(timestamp: Timestamp, price: T, volume: T) -> Result<Self> {
        make_tick(timestamp, price, volume, None)
    }

    /// Same tick with price and volume scaled and value recomputed.
    pub fn scaled(&self, price_factor: T, volume_factor: T) -> Result<Self> {
        make_tick(
            self.timestamp,
            self.price * price_factor,
            self.volume * volume_factor,
            None,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// `[t - width/2, t + width/2)`
    #[default]
    Centered,
    /// `[t - width, t)`
    Trailing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center: Timestamp,
    width_nanos: i64,
    pub alignment: Alignment,
}

impl WindowSpec {
    pub fn new(center: Timestamp, width: Duration, alignment: Alignment) -> Result<Self> {
        let width_nanos = i64::try_from(width.as_nanos()).map_err(|_| Error::InvalidWidth)?;
        Self::from_nanos(center, width_nanos, alignment)
    }

    pub fn from_nanos(center: Timestamp, width_nanos: i64, alignment: Alignment) -> Result<Self> {
        if width_nanos <= 0 {
            return Err(Error::InvalidWidth);
        }
        Ok(WindowSpec {
            center,
            width_nanos,
            alignment,
        })
    }

    /// Window whose half-open interval starts at `start`.
    pub fn starting_at(start: Timestamp, width_nanos: i64, alignment: Alignment) -> Result<Self> {
        let center = match alignment {
            Alignment::Centered => start.0 + width_nanos / 2,
            Alignment::Trailing => start.0 + width_nanos,
        };
        Self::from_nanos(Timestamp(center), width_nanos, alignment)
    }

    pub fn width_nanos(&self) -> i64 {
        self.width_nanos
    }

    /// Inclusive left edge.
    pub fn start(&self) -> Timestamp {
        match self.alignment {
            Alignment::Centered => Timestamp(self.center.0 - self.width_nanos / 2),
            Alignment::Trailing => Timestamp(self.center.0 - self.width_nanos),
        }
    }

    /// Exclusive right edge.
    pub fn end(&self) -> Timestamp {
        Timestamp(self.start().0 + self.width_nanos)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start() <= t && t < self.end()
    }
}

/// The `N` ticks of one window, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedTrades<T> {
    spec: WindowSpec,
    ticks: Vec<TradeTick<T>>,
}

impl<T: Scalar> WindowedTrades<T> {
    pub fn new(spec: WindowSpec, ticks: Vec<TradeTick<T>>) -> Result<Self> {
        for tick in &ticks {
            if !spec.contains(tick.timestamp) {
                return Err(Error::TickOutsideWindow {
                    timestamp: tick.timestamp.0,
                    start: spec.start().0,
                    end: spec.end().0,
                });
            }
        }
        if ticks.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::UnsortedTicks);
        }
        Ok(WindowedTrades { spec, ticks })
    }

    /// Selects the ticks of a sorted tape that fall inside `spec`.
    pub fn select(spec: WindowSpec, tape: &[TradeTick<T>]) -> Self {
        let lo = tape.partition_point(|t| t.timestamp < spec.start());
        let hi = tape.partition_point(|t| t.timestamp < spec.end());
        WindowedTrades {
            spec,
            ticks: tape[lo..hi.max(lo)].to_vec(),
        }
    }

    /// A single window spanning the whole (sorted, nonempty) tape.
    pub fn spanning(tape: Vec<TradeTick<T>>, alignment: Alignment) -> Result<Self> {
        let first = tape.first().ok_or(Error::EmptyTape)?.timestamp;
        let last = tape.last().ok_or(Error::EmptyTape)?.timestamp;
        let spec = WindowSpec::starting_at(first, last.0 - first.0 + 1, alignment)?;
        Self::new(spec, tape)
    }

    pub(crate) fn from_parts(spec: WindowSpec, ticks: Vec<TradeTick<T>>) -> Self {
        WindowedTrades { spec, ticks }
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn ticks(&self) -> &[TradeTick<T>] {
        &self.ticks
    }

    pub fn into_ticks(self) -> Vec<TradeTick<T>> {
        self.ticks
    }

    pub fn count(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }
}
