//! Table and JSON rendering. Numbers are written at full precision in
//! scientific notation unless `--pretty` is given.

use std::io::{self, Write};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    /// Not applicable, e.g. an order estimate below the noise floor.
    Na,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Na, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Na => Value::String("n/a".into()),
        }
    }

    fn to_csv(&self, pretty: bool) -> String {
        match self {
            Cell::Num(x) => number(*x, pretty),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Na => "n/a".into(),
        }
    }
}

/// Command result: a table for CSV plus whole-run fields for JSON.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub meta: Vec<(&'static str, Value)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(command: &'static str, columns: Vec<&'static str>) -> Self {
        Self {
            command,
            meta: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &'static str, value: impl Serialize) {
        self.meta
            .push((key, serde_json::to_value(value).expect("meta serializes")));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("command".into(), Value::from(self.command));
        for (k, v) in &self.meta {
            obj.insert((*k).into(), v.clone());
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let m: serde_json::Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| ((*c).to_string(), v.to_json()))
                    .collect();
                Value::Object(m)
            })
            .collect();
        obj.insert("rows".into(), Value::Array(rows));
        Value::Object(obj)
    }

    pub fn render(&self, format: Format, pretty: bool) -> String {
        match format {
            Format::Json => {
                let mut s = to_json_string(&self.to_json_value(), pretty);
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for r in &self.rows {
                    let line: Vec<String> = r.iter().map(|c| c.to_csv(pretty)).collect();
                    s.push_str(&line.join(","));
                    s.push('\n');
                }
                s
            }
        }
    }
}

pub fn number(x: f64, pretty: bool) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    // an absent barrier contributes -0.5 * 0
    let x = if x == 0.0 { 0.0 } else { x };
    if !pretty {
        return format!("{x:e}");
    }
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

/// Writes floats through [`number`] and delegates layout to `F`.
struct Numbers<F> {
    inner: F,
    pretty: bool,
}

impl<F: Formatter> Formatter for Numbers<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(number(value, self.pretty).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Compact JSON with full-precision floats, or indented JSON with rounded
/// floats when `pretty`.
pub fn to_json_string(value: &impl Serialize, pretty: bool) -> String {
    let mut buf = Vec::new();
    if pretty {
        let f = Numbers {
            inner: PrettyFormatter::new(),
            pretty,
        };
        value
            .serialize(&mut Serializer::with_formatter(&mut buf, f))
            .expect("json");
    } else {
        let f = Numbers {
            inner: serde_json::ser::CompactFormatter,
            pretty,
        };
        value
            .serialize(&mut Serializer::with_formatter(&mut buf, f))
            .expect("json");
    }
    String::from_utf8(buf).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 123456.789, 0.0] {
            assert_eq!(number(x, false).parse::<f64>().unwrap(), x);
        }
        let s = to_json_string(&vec![0.1, 1e300], false);
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 1e300]);
    }

    #[test]
    fn pretty_rounds() {
        assert_eq!(number(1.0 / 3.0, true), "0.333333");
        assert_eq!(number(2.5e-9, true), "2.5000e-9");
    }
}
