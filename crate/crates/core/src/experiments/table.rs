//! Result tables and their CSV / JSON renderings.
//!
//! Numbers are written in shortest round-trip form, so every emitted value parses
//! back to the exact `f64` that was computed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::config::{Format, CONFIG_LINE_PREFIX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Num(v) => Some(v),
            Cell::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => Value::String(format_number(*v)),
            Cell::Int(v) => json!(v),
            Cell::Text(t) => Value::String(t.clone()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(t) => csv_escape(t),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// Shortest decimal that parses back to `v`; exponent form outside `[1e-4, 1e16)`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let m = v.abs();
    if m == 0.0 || (1e-4..1e16).contains(&m) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_escape(t: &str) -> String {
    if t.contains([',', '"', '\n']) {
        format!("\"{}\"", t.replace('"', "\"\""))
    } else {
        t.to_string()
    }
}

/// Names of the columns holding plot-ready `(x, y, yerr)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub x: String,
    pub y: String,
    pub yerr: Option<String>,
}

/// Entries that differ between otherwise identical runs.
pub const VOLATILE_KEYS: [&str; 2] = ["wall_time_s", "created_unix"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub plot: Option<PlotSeries>,
    /// Ordered `(key, value)` pairs; `config` holds the JSON echo of the configuration.
    pub metadata: Vec<(String, Value)>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
            metadata: Vec::new(),
        }
    }

    pub fn with_plot(mut self, x: &str, y: &str, yerr: Option<&str>) -> Self {
        self.plot = Some(PlotSeries {
            x: x.into(),
            y: y.into(),
            yerr: yerr.map(Into::into),
        });
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width differs from header in {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn set_meta(&mut self, key: &str, value: Value) {
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&Value> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column (`None` for text cells).
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }

    pub fn is_partial(&self) -> bool {
        matches!(self.meta("partial"), Some(Value::Bool(true)))
    }

    /// CSV with `#` metadata lines; `volatile = false` omits wall time and creation time.
    pub fn to_csv(&self, volatile: bool) -> String {
        let mut out = String::new();
        writeln!(out, "# table: {}", self.name).unwrap();
        for (k, v) in &self.metadata {
            if !volatile && VOLATILE_KEYS.contains(&k.as_str()) {
                continue;
            }
            if k == "config" {
                writeln!(out, "{CONFIG_LINE_PREFIX}{v}").unwrap();
            } else {
                let shown = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                writeln!(out, "# {k}: {shown}").unwrap();
            }
        }
        if let Some(p) = &self.plot {
            writeln!(
                out,
                "# plot: x={} y={} yerr={}",
                p.x,
                p.y,
                p.yerr.as_deref().unwrap_or("none")
            )
            .unwrap();
        }
        let header: Vec<String> = self.columns.iter().map(|c| csv_escape(c)).collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn to_json_value(&self, volatile: bool) -> Value {
        let mut meta = Map::new();
        for (k, v) in &self.metadata {
            if volatile || !VOLATILE_KEYS.contains(&k.as_str()) {
                meta.insert(k.clone(), v.clone());
            }
        }
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        let mut obj = Map::new();
        obj.insert("table".into(), json!(self.name));
        obj.insert("metadata".into(), Value::Object(meta));
        obj.insert("columns".into(), json!(self.columns));
        obj.insert("rows".into(), Value::Array(rows));
        if let Some(p) = &self.plot {
            let pick = |name: &str| -> Value {
                let j = self.column_index(name).expect("plot column exists");
                Value::Array(self.rows.iter().map(|r| r[j].to_json()).collect())
            };
            let mut series = Map::new();
            series.insert("x_label".into(), json!(p.x));
            series.insert("y_label".into(), json!(p.y));
            series.insert("x".into(), pick(&p.x));
            series.insert("y".into(), pick(&p.y));
            series.insert(
                "yerr".into(),
                match &p.yerr {
                    Some(e) => pick(e),
                    None => Value::Null,
                },
            );
            obj.insert("plot".into(), Value::Object(series));
        }
        Value::Object(obj)
    }

    pub fn to_json(&self, volatile: bool) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.to_json_value(volatile)).expect("table serializes");
        s.push('\n');
        s
    }
}

/// All tables of one run; the first is the main table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<ResultTable>,
}

impl ExperimentOutput {
    pub fn main(&self) -> &ResultTable {
        &self.tables[0]
    }

    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn is_partial(&self) -> bool {
        self.tables.iter().any(ResultTable::is_partial)
    }
}

/// Writes `<stem>.csv` / `<stem>.json` for the main table and `<stem>-<name>.*` for
/// the others. Returns the paths written.
pub fn emit_results(
    output: &ExperimentOutput,
    dir: &Path,
    stem: &str,
    formats: &[Format],
) -> Result<Vec<PathBuf>> {
    if output.tables.is_empty() {
        return Err(Error::Config(
            "nothing to emit: the run produced no tables".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, table) in output.tables.iter().enumerate() {
        let base = if i == 0 {
            stem.to_string()
        } else {
            format!("{stem}-{}", table.name)
        };
        for f in formats {
            let (ext, body) = match f {
                Format::Csv => ("csv", table.to_csv(true)),
                Format::Json => ("json", table.to_json(true)),
            };
            let path = dir.join(format!("{base}.{ext}"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new("main", &["D", "d_fit", "note"]).with_plot("D", "d_fit", None);
        t.set_meta("config", json!({"mode": "x"}));
        t.set_meta("seed", json!(7));
        t.set_meta("wall_time_s", json!(0.25));
        t.push(vec![
            f64::INFINITY.into(),
            2.0000000000000004.into(),
            "a,b".into(),
        ]);
        t.push(vec![1e-6.into(), 0.1.into(), "plain".into()]);
        t
    }

    #[test]
    fn numbers_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            2.0000000000000004,
            1e-300,
            6.02e23,
            -1.5e-5,
            0.0,
            123456.789,
        ] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_number(1e-6), "1e-6");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv(true);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# table: main");
        assert_eq!(lines[1], r#"# config: {"mode":"x"}"#);
        assert!(lines.contains(&"# wall_time_s: 0.25"));
        assert!(lines.contains(&"D,d_fit,note"));
        assert_eq!(lines[lines.len() - 2], "inf,2.0000000000000004,\"a,b\"");
        assert!(!sample().to_csv(false).contains("wall_time_s"));
    }

    #[test]
    fn json_layout() {
        let v = sample().to_json_value(true);
        assert_eq!(v["columns"], json!(["D", "d_fit", "note"]));
        assert_eq!(v["rows"][0][0], json!("inf"));
        assert_eq!(v["plot"]["y"], json!([2.0000000000000004, 0.1]));
        assert_eq!(v["metadata"]["seed"], json!(7));
        let text = sample().to_json(true);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["rows"][0][1].as_f64().unwrap(), 2.0000000000000004);
    }

    #[test]
    fn emit_writes_all_tables() {
        let dir = tempfile::tempdir().unwrap();
        let out = ExperimentOutput {
            tables: vec![sample(), ResultTable::new("lengths", &["dx", "l"])],
        };
        let paths = emit_results(&out, dir.path(), "m-1", &[Format::Csv, Format::Json]).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into())
            .collect();
        assert_eq!(
            names,
            ["m-1.csv", "m-1.json", "m-1-lengths.csv", "m-1-lengths.json"]
        );
        assert_eq!(
            fs::read_to_string(&paths[0]).unwrap(),
            sample().to_csv(true)
        );
    }
}
