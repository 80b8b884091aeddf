//! Run reports and their JSON, CSV and text renderings.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Present on every failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String, witness: impl FnOnce() -> String) -> Self {
        Check { name: name.into(), pass, detail, witness: (!pass).then(witness) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_f64(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(i: i64) -> Self {
        Cell::Int(i)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()
    }
}

/// Primary artifact of a command, written to `--out`.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    /// Index into the report's tables.
    Csv(usize),
    Json(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub data: serde_json::Value,
    /// Seconds; text rendering only, so that file outputs stay reproducible.
    #[serde(skip)]
    pub wall_clock: f64,
    #[serde(skip)]
    pub lines: Vec<String>,
    #[serde(skip)]
    pub artifact: Option<Artifact>,
}

impl Report {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Report {
            version: concat!("foliation-lab ", env!("CARGO_PKG_VERSION")).into(),
            command: command.into(),
            config,
            checks: Vec::new(),
            tables: Vec::new(),
            data: serde_json::Value::Null,
            wall_clock: 0.0,
            lines: Vec::new(),
            artifact: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn line(&mut self, s: String) {
        self.lines.push(s);
    }

    pub fn add_table(&mut self, t: Table) -> usize {
        self.tables.push(t);
        self.tables.len() - 1
    }

    pub fn set_artifact(&mut self, a: Artifact) {
        self.artifact = Some(a);
    }

    pub fn text(&self) -> String {
        let mut s = format!("{} {}\n", self.version, self.command);
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        for t in &self.tables {
            s.push_str(&format!("table {} ({} rows): {}\n", t.name, t.rows.len(), t.columns.join(",")));
        }
        for c in &self.checks {
            s.push_str(&format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
            if let Some(w) = &c.witness {
                s.push_str(&format!("  witness: {w}\n"));
            }
        }
        s.push_str(&format!("wall-clock {:.3}s\n", self.wall_clock));
        s
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// CSV writes the checks to `path` and each table to a sibling file.
    pub fn write(&self, path: &Path, format: crate::config::Format) -> io::Result<()> {
        use crate::config::Format;
        match format {
            Format::Text => std::fs::write(path, self.text()),
            Format::Json => std::fs::write(path, self.to_json()),
            Format::Csv => {
                let mut checks = Table::new("checks", &["name", "pass", "detail", "witness"]);
                for c in &self.checks {
                    checks.push(vec![
                        Cell::Text(c.name.clone()),
                        Cell::Text(if c.pass { "PASS".into() } else { "FAIL".into() }),
                        Cell::Text(c.detail.clone()),
                        Cell::Text(c.witness.clone().unwrap_or_default()),
                    ]);
                }
                checks.write_csv(path)?;
                for t in &self.tables {
                    t.write_csv(&sibling(path, &t.name))?;
                }
                Ok(())
            }
        }
    }

    pub fn write_artifact(&self, path: &Path) -> io::Result<()> {
        match &self.artifact {
            Some(Artifact::Csv(i)) => self.tables[*i].write_csv(path),
            Some(Artifact::Json(v)) => std::fs::write(path, to_json_string(v)),
            None => Err(io::Error::other(format!("{} produces no --out artifact", self.command))),
        }
    }
}

/// `dir/stem-name.ext`.
pub fn sibling(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}-{name}.{ext}"))
}

/// Seventeen significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON whose floats carry seventeen significant digits.
struct Sig17(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(v: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(serde_json::ser::PrettyFormatter::new()));
    v.serialize(&mut ser).expect("serializable report");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf-8 json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        let v = serde_json::json!({"x": [1.0 / 3.0, 2.5e-300]});
        let s = to_json_string(&v);
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn failures_carry_witnesses() {
        let c = Check::new("x", false, "bad".into(), || "at 1".into());
        assert_eq!(c.witness.as_deref(), Some("at 1"));
        assert!(Check::new("y", true, "ok".into(), || unreachable!()).witness.is_none());
    }
}
