//! CSV and JSON artifacts. Every file carries the run metadata; CSV files start
//! with `#` comment lines that describe each column.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub kernel: Vec<[f64; 2]>,
    /// Full effective configuration, defaults included.
    pub config: Value,
}

impl Metadata {
    pub fn new(command: &str, cfg: &RunConfig, kernel: Vec<[f64; 2]>) -> Self {
        Self {
            tool: "wavecg",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: cfg.seed,
            kernel,
            config: serde_json::to_value(cfg).unwrap_or(Value::Null),
        }
    }
}

/// A column name with its meaning and unit.
pub struct Column {
    pub name: &'static str,
    pub doc: &'static str,
}

pub const fn col(name: &'static str, doc: &'static str) -> Column {
    Column { name, doc }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // shortest round-trip representation: deterministic and lossless
            Cell::Num(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn csv(&mut self, name: &str, meta: &Metadata, columns: &[Column], rows: Vec<Vec<Cell>>) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# {} {} / {}", meta.tool, meta.version, meta.command)?;
        writeln!(f, "# kernel (a, b) pairs of mu(s) = sum a exp(-b s): {:?}", meta.kernel)?;
        writeln!(f, "# seed: {}", meta.seed)?;
        writeln!(f, "# config: {}", meta.config)?;
        for c in columns {
            writeln!(f, "# column {}: {}", c.name, c.doc)?;
        }
        let mut w = csv::Writer::from_writer(f);
        w.write_record(columns.iter().map(|c| c.name))?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, meta: &Metadata, body: Value) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let doc = json!({ "metadata": meta, "result": body });
        let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}
