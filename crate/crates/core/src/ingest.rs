//! Trade tape parsing, canonical serialization, and window partitioning.
//!
//! Two tape encodings are accepted:
//!
//! * CSV with header `ts,price,volume[,value]`, optionally followed by the
//!   agent columns `agent_id`, `expectation`, `trade_id`. Decimal point, no
//!   thousands separators, LF or CRLF line endings.
//! * JSON lines, one object per line with keys `ts`, `price`, `volume` and
//!   optional `value`, `agent_id`, `expectation`, `trade_id`.
//!
//! Tapes must already be in nondecreasing timestamp order; a timestamp that
//! goes backwards is reported with its line number rather than sorted away.

use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trade::{make_tick, Alignment, Timestamp, TradeTick, WindowSpec, WindowedTrades};

/// Upper bound on the number of windows a single partition may produce.
pub const MAX_WINDOWS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapeKind {
    #[default]
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    #[default]
    EpochNanos,
    EpochMillis,
    Iso8601,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TapeFormat {
    pub kind: TapeKind,
    pub timestamp_format: TimestampFormat,
    /// Require a value field on every record. When false the field is optional
    /// and, if absent, computed as `price * volume`.
    pub has_value_column: bool,
}

impl TapeFormat {
    pub fn csv() -> Self {
        TapeFormat::default()
    }

    pub fn json_lines() -> Self {
        TapeFormat {
            kind: TapeKind::JsonLines,
            ..TapeFormat::default()
        }
    }

    pub fn with_timestamps(mut self, timestamp_format: TimestampFormat) -> Self {
        self.timestamp_format = timestamp_format;
        self
    }
}

/// One parsed tape line: the tick plus the optional agent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeRecord<T> {
    pub tick: TradeTick<T>,
    pub agent_id: Option<String>,
    pub expectation: Option<T>,
    pub trade_id: Option<String>,
    pub line: u64,
}

pub fn parse_timestamp(raw: &str, format: TimestampFormat) -> std::result::Result<Timestamp, String> {
    let raw = raw.trim();
    match format {
        TimestampFormat::EpochNanos => raw
            .parse::<i64>()
            .map(Timestamp)
            .map_err(|e| format!("bad epoch-nanos timestamp {raw:?}: {e}")),
        TimestampFormat::EpochMillis => raw
            .parse::<i64>()
            .map_err(|e| format!("bad epoch-millis timestamp {raw:?}: {e}"))?
            .checked_mul(1_000_000)
            .map(Timestamp)
            .ok_or_else(|| format!("timestamp {raw:?} overflows nanoseconds")),
        TimestampFormat::Iso8601 => chrono::DateTime::parse_from_rfc3339(raw)
            .map_err(|e| format!("bad iso8601 timestamp {raw:?}: {e}"))?
            .timestamp_nanos_opt()
            .map(Timestamp)
            .ok_or_else(|| format!("timestamp {raw:?} overflows nanoseconds")),
    }
}

fn parse_number<T: Scalar>(field: &str, raw: &str, line: u64) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("bad {field} {raw:?}"),
    })
}

struct RawFields<T> {
    ts: Timestamp,
    price: T,
    volume: T,
    value: Option<T>,
    agent_id: Option<String>,
    expectation: Option<T>,
    trade_id: Option<String>,
}

fn finish_record<T: Scalar>(
    raw: RawFields<T>,
    line: u64,
    format: &TapeFormat,
    last: &mut Option<Timestamp>,
) -> Result<TapeRecord<T>> {
    if format.has_value_column && raw.value.is_none() {
        return Err(Error::Parse {
            line,
            message: "missing value field".into(),
        });
    }
    if let Some(e) = raw.expectation {
        if !e.is_finite() {
            return Err(Error::Parse {
                line,
                message: "expectation must be finite".into(),
            });
        }
    }
    let tick = make_tick(raw.ts, raw.price, raw.volume, raw.value).map_err(|e| Error::Record {
        line,
        source: Box::new(e),
    })?;
    if matches!(*last, Some(prev) if tick.timestamp < prev) {
        return Err(Error::OutOfOrderTimestamp { line });
    }
    *last = Some(tick.timestamp);
    Ok(TapeRecord {
        tick,
        agent_id: raw.agent_id,
        expectation: raw.expectation,
        trade_id: raw.trade_id,
        line,
    })
}

const REQUIRED: [&str; 3] = ["ts", "price", "volume"];
const OPTIONAL: [&str; 4] = ["value", "agent_id", "expectation", "trade_id"];

#[derive(Default)]
struct Columns {
    value: Option<usize>,
    agent_id: Option<usize>,
    expectation: Option<usize>,
    trade_id: Option<usize>,
}

fn csv_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 3 || names[..3] != REQUIRED {
        return Err(bad(format!(
            "header must start with ts,price,volume, got {:?}",
            names.join(",")
        )));
    }
    let mut cols = Columns::default();
    for (i, name) in names.iter().enumerate().skip(3) {
        let slot = match *name {
            "value" => &mut cols.value,
            "agent_id" => &mut cols.agent_id,
            "expectation" => &mut cols.expectation,
            "trade_id" => &mut cols.trade_id,
            other => return Err(bad(format!("unknown column {other:?}; expected one of {OPTIONAL:?}"))),
        };
        if slot.replace(i).is_some() {
            return Err(bad(format!("duplicate column {name:?}")));
        }
    }
    Ok(cols)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
            line,
            message: format!("invalid UTF-8: {err}"),
        },
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn non_empty(s: Option<&str>) -> Option<&str> {
    s.map(str::trim).filter(|s| !s.is_empty())
}

fn parse_csv<T: Scalar, R: Read>(source: R, format: &TapeFormat) -> Result<Vec<TapeRecord<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyTape);
    }
    let cols = csv_columns(&headers)?;
    let mut out = Vec::new();
    let mut last = None;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts =
            parse_timestamp(&record[0], format.timestamp_format).map_err(|message| Error::Parse { line, message })?;
        let optional_number = |idx: Option<usize>, field: &str| -> Result<Option<T>> {
            non_empty(idx.and_then(|i| record.get(i)))
                .map(|raw| parse_number(field, raw, line))
                .transpose()
        };
        let raw = RawFields {
            ts,
            price: parse_number("price", &record[1], line)?,
            volume: parse_number("volume", &record[2], line)?,
            value: optional_number(cols.value, "value")?,
            expectation: optional_number(cols.expectation, "expectation")?,
            agent_id: non_empty(cols.agent_id.and_then(|i| record.get(i))).map(String::from),
            trade_id: non_empty(cols.trade_id.and_then(|i| record.get(i))).map(String::from),
        };
        out.push(finish_record(raw, line, format, &mut last)?);
    }
    Ok(out)
}

fn json_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_json_lines<T: Scalar, R: Read>(mut source: R, format: &TapeFormat) -> Result<Vec<TapeRecord<T>>> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| Error::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    let mut last = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line, message };
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(raw_line).map_err(|e| bad(e.to_string()))?;
        for key in obj.keys() {
            if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
                return Err(bad(format!("unknown key {key:?}")));
            }
        }
        let number = |key: &str| -> Result<Option<T>> {
            match obj.get(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::Number(n)) => n
                    .as_f64()
                    .map(|x| Some(T::lit(x)))
                    .ok_or_else(|| bad(format!("bad {key}"))),
                Some(other) => Err(bad(format!("{key} must be a number, got {other}"))),
            }
        };
        let required = |key: &str| -> Result<T> { number(key)?.ok_or_else(|| bad(format!("missing {key}"))) };
        let ts = match obj.get("ts") {
            Some(serde_json::Value::Number(n)) => parse_timestamp(&n.to_string(), format.timestamp_format),
            Some(serde_json::Value::String(s)) => parse_timestamp(s, format.timestamp_format),
            _ => Err("missing ts".to_string()),
        }
        .map_err(bad)?;
        let raw = RawFields {
            ts,
            price: required("price")?,
            volume: required("volume")?,
            value: number("value")?,
            expectation: number("expectation")?,
            agent_id: obj.get("agent_id").and_then(json_string),
            trade_id: obj.get("trade_id").and_then(json_string),
        };
        out.push(finish_record(raw, line, format, &mut last)?);
    }
    Ok(out)
}

/// Parses a tape, keeping the optional agent columns.
pub fn parse_records<T: Scalar, R: Read>(source: R, format: &TapeFormat) -> Result<Vec<TapeRecord<T>>> {
    match format.kind {
        TapeKind::Csv => parse_csv(source, format),
        TapeKind::JsonLines => parse_json_lines(source, format),
    }
}

/// Parses a tape into ticks in nondecreasing timestamp order.
pub fn parse_tape<T: Scalar, R: Read>(source: R, format: &TapeFormat) -> Result<Vec<TradeTick<T>>> {
    Ok(parse_records(source, format)?.into_iter().map(|r| r.tick).collect())
}

/// Writes the canonical CSV tape `ts,price,volume,value` with epoch-nanosecond
/// timestamps and shortest round-trip number formatting.
pub fn write_tape_csv<T: Scalar, W: Write>(mut out: W, ticks: &[TradeTick<T>]) -> std::io::Result<()> {
    writeln!(out, "ts,price,volume,value")?;
    for t in ticks {
        writeln!(out, "{},{},{},{}", t.timestamp.0, t.price, t.volume, t.value)?;
    }
    out.flush()
}

pub fn write_tape_json_lines<T: Scalar, W: Write>(mut out: W, ticks: &[TradeTick<T>]) -> std::io::Result<()> {
    for t in ticks {
        writeln!(
            out,
            r#"{{"ts":{},"price":{},"volume":{},"value":{}}}"#,
            t.timestamp.0, t.price, t.volume, t.value
        )?;
    }
    out.flush()
}

pub fn write_tape<T: Scalar, W: Write>(out: W, ticks: &[TradeTick<T>], kind: TapeKind) -> std::io::Result<()> {
    match kind {
        TapeKind::Csv => write_tape_csv(out, ticks),
        TapeKind::JsonLines => write_tape_json_lines(out, ticks),
    }
}

/// Window specs tiling `[first, last]` from `first` in steps of `width_nanos`.
pub fn window_specs(
    first: Timestamp,
    last: Timestamp,
    width_nanos: i64,
    alignment: Alignment,
) -> Result<Vec<WindowSpec>> {
    if width_nanos <= 0 {
        return Err(Error::InvalidWidth);
    }
    let span = (last.0 as i128 - first.0 as i128).max(0) as u128;
    let count = (span / width_nanos as u128) as u64 + 1;
    if count > MAX_WINDOWS {
        return Err(Error::TooManyWindows {
            count,
            limit: MAX_WINDOWS,
        });
    }
    (0..count as i64)
        .map(|k| WindowSpec::starting_at(Timestamp(first.0 + k * width_nanos), width_nanos, alignment))
        .collect()
}

/// Splits a sorted tape into consecutive half-open windows of equal width,
/// anchored at the first tick. Windows without ticks are kept with `N = 0`.
pub fn partition_windows<T: Scalar>(
    ticks: &[TradeTick<T>],
    width: Duration,
    alignment: Alignment,
) -> Result<Vec<WindowedTrades<T>>> {
    let width_nanos = i64::try_from(width.as_nanos()).map_err(|_| Error::InvalidWidth)?;
    partition_windows_nanos(ticks, width_nanos, alignment)
}

pub fn partition_windows_nanos<T: Scalar>(
    ticks: &[TradeTick<T>],
    width_nanos: i64,
    alignment: Alignment,
) -> Result<Vec<WindowedTrades<T>>> {
    let (first, last) = match (ticks.first(), ticks.last()) {
        (Some(f), Some(l)) => (f.timestamp, l.timestamp),
        _ => return Err(Error::EmptyTape),
    };
    if ticks.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::UnsortedTicks);
    }
    let specs = window_specs(first, last, width_nanos, alignment)?;
    let mut rest = ticks;
    Ok(specs
        .into_iter()
        .map(|spec| {
            let n = rest.partition_point(|t| t.timestamp < spec.end());
            let (inside, tail) = rest.split_at(n);
            rest = tail;
            WindowedTrades::from_parts(spec, inside.to_vec())
        })
        .collect())
}
