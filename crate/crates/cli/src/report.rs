//! Deterministic JSON and CSV rendering of run reports.
//!
//! Numbers are rounded to 15 significant digits and then printed in their
//! shortest round-trip form, so identical inputs give identical bytes.
//! Non-finite values render as `null` (JSON) or an empty field (CSV).

use std::io::{self, Write};

use serde_json::{Map, Value};

pub type Record = Map<String, Value>;

pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.14e}").parse().expect("formatted float parses");
    // -0.0 and 0.0 print differently; normalize.
    Value::from(if rounded == 0.0 { 0.0 } else { rounded })
}

pub fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().copied().map(num).collect())
}

pub fn nulls(n: usize) -> Value {
    Value::Array(vec![Value::Null; n])
}

/// A complete run report: the resolved configuration, per-window records and
/// an optional summary.
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub meta: Record,
    pub records: Vec<Record>,
    pub summary: Option<Record>,
}

impl Report {
    pub fn new(command: &'static str, config: Value) -> Self {
        Report {
            command,
            config,
            meta: Record::new(),
            records: Vec::new(),
            summary: None,
        }
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut root = Record::new();
        root.insert("command".into(), Value::from(self.command));
        root.insert("config".into(), self.config.clone());
        for (k, v) in &self.meta {
            root.insert(k.clone(), v.clone());
        }
        root.insert(
            "records".into(),
            Value::Array(self.records.iter().cloned().map(Value::Object).collect()),
        );
        if let Some(summary) = &self.summary {
            root.insert("summary".into(), Value::Object(summary.clone()));
        }
        serde_json::to_writer_pretty(&mut out, &Value::Object(root))?;
        writeln!(out)?;
        out.flush()
    }

    /// Header comment lines carry the config, metadata and summary; array
    /// fields expand into `name1..nameN` columns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# config: {}", self.config)?;
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}")?;
        }
        if let Some(first) = self.records.first() {
            writeln!(out, "{}", columns(first).join(","))?;
            for record in &self.records {
                let row: Vec<String> = record.values().flat_map(flatten_value).collect();
                writeln!(out, "{}", row.join(","))?;
            }
        }
        if let Some(summary) = &self.summary {
            writeln!(out, "# summary: {}", Value::Object(summary.clone()))?;
        }
        out.flush()
    }
}

fn columns(record: &Record) -> Vec<String> {
    record
        .iter()
        .flat_map(|(k, v)| match v {
            Value::Array(items) => (1..=items.len()).map(|i| format!("{k}{i}")).collect(),
            _ => vec![k.clone()],
        })
        .collect()
}

fn flatten_value(v: &Value) -> Vec<String> {
    match v {
        Value::Array(items) => items.iter().map(cell).collect(),
        other => vec![cell(other)],
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
