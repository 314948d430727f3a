//! Tabular output: typed cells rendered as aligned text, CSV or JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::roofline::GIB;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Stored in seconds, shown in milliseconds.
    Seconds(f64),
    Hz(f64),
    /// Stored in bytes, shown in GiB.
    Bytes(u64),
    /// Speedup factor.
    Ratio(f64),
    Float { value: f64, decimals: usize },
    Int(u64),
    Text(String),
    NotApplicable,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn float(value: f64, decimals: usize) -> Self {
        Cell::Float { value, decimals }
    }

    pub fn or_na(self, feasible: bool) -> Self {
        if feasible { self } else { Cell::NotApplicable }
    }

    /// Display value without unit.
    pub fn render(&self) -> String {
        match self {
            Cell::Seconds(s) => format!("{:.2}", s * 1e3),
            Cell::Hz(f) => format!("{f:.1}"),
            Cell::Bytes(b) => format!("{:.2}", *b as f64 / GIB),
            Cell::Ratio(r) => format!("{r:.2}"),
            Cell::Float { value, decimals } => format!("{value:.decimals$}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(t) => t.clone(),
            Cell::NotApplicable => "N/A".to_string(),
        }
    }

    /// Display value with unit, as printed in aligned tables.
    pub fn render_with_unit(&self) -> String {
        match self {
            Cell::Seconds(_) => format!("{} ms", self.render()),
            Cell::Hz(_) => format!("{} Hz", self.render()),
            Cell::Bytes(_) => format!("{} GB", self.render()),
            Cell::Ratio(_) => format!("{}x", self.render()),
            _ => self.render(),
        }
    }

    /// Value in display units at full precision.
    fn json(&self) -> Value {
        let num = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        match self {
            Cell::Seconds(s) => num(s * 1e3),
            Cell::Hz(f) | Cell::Ratio(f) => num(*f),
            Cell::Bytes(b) => num(*b as f64 / GIB),
            Cell::Float { value, .. } => num(*value),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(t) => Value::from(t.clone()),
            Cell::NotApplicable => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// Suffix for CSV/JSON keys, e.g. `ms`.
    pub unit: Option<&'static str>,
}

impl Column {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), unit: None }
    }

    pub fn with_unit(name: &str, unit: &'static str) -> Self {
        Self { name: name.to_string(), unit: Some(unit) }
    }

    pub fn key(&self) -> String {
        match self.unit {
            Some(u) => format!("{}_{}", self.name, u),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

impl Table {
    pub fn new(title: &str, columns: Vec<Column>) -> Self {
        Self { title: title.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Table => Ok(self.to_text()),
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Aligned text; a single row is printed as `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        if self.rows.len() == 1 {
            let width = self.columns.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for (c, cell) in self.columns.iter().zip(&self.rows[0]) {
                let _ = writeln!(out, "  {:<width$}  {}", c.name, cell.render_with_unit());
            }
            return out;
        }
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::render_with_unit).collect())
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| body.iter().map(|r| r[i].len()).chain([c.name.len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(self.columns.iter().map(|c| c.name.as_str()).collect()));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for r in &body {
            let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(self.columns.iter().map(Column::key)).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> = self.columns.iter().zip(r).map(|(c, cell)| (c.key(), cell.json())).collect();
                Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({ "title": self.title, "rows": rows });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))
    }
}
