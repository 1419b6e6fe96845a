use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::svg::Plot;

/// C `%.12e`: twelve digits after the point, signed exponent of at least two digits.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => sci(*x),
            Cell::Int(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn floats(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| Cell::Float(x)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Rebuilds every object with its keys in sorted order.
pub fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = sorted(serde_json::to_value(value)?);
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(text)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub parameters: Value,
    pub output_dir: String,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
}

/// Files written into one output directory, tracked for the manifest.
pub struct Outputs {
    dir: Option<PathBuf>,
    files: BTreeSet<String>,
}

pub const MANIFEST: &str = "manifest.json";

impl Outputs {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("cannot create output directory {}", d.display()))?;
        }
        Ok(Outputs { dir: dir.map(Path::to_path_buf), files: BTreeSet::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.insert(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.render())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = to_json(value)?;
        self.write(name, &text)
    }

    pub fn svg(&mut self, name: &str, plot: &Plot) -> Result<()> {
        self.write(name, &plot.render())
    }

    /// Writes `manifest.json`, which lists itself along with every other file.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<()> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        self.files.insert(MANIFEST.to_string());
        manifest.output_dir = dir.display().to_string();
        manifest.files = self.files.iter().cloned().collect();
        self.write(MANIFEST, &to_json(&manifest)?)
    }
}
