use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use ladderqed::config::SimConfig;
use ladderqed::dynamics::series::{fmt_num, hashed_stem};
use ladderqed::dynamics::{SweepResult, TimeSeries};
use serde_json::{json, Value};

/// Writes every artifact of one run. File stems are `<command>-<hash>` with
/// the hash taken over the config (output directory excluded), so a rerun
/// overwrites its own files and nothing else.
pub struct Emitter {
    dir: PathBuf,
    stem: String,
    config: Value,
    command: &'static str,
    plot: bool,
    written: Vec<PathBuf>,
}

/// One named pass/fail outcome for `--check`.
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

impl Emitter {
    pub fn new(cfg: &SimConfig, command: &'static str, plot: bool) -> Result<Self> {
        let mut keyed = cfg.clone();
        keyed.output = PathBuf::new();
        keyed.numerics.workers = 0;
        Ok(Emitter {
            dir: cfg.output.clone(),
            stem: hashed_stem(command, &keyed)?,
            config: serde_json::to_value(cfg)?,
            command,
            plot,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() { format!("{}.{ext}", self.stem) } else { format!("{}-{suffix}.{ext}", self.stem) };
        self.dir.join(name)
    }

    fn sidecar(&self, result: Value) -> Value {
        json!({ "command": self.command, "config": self.config, "result": result })
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, suffix: &str, result: Value) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.sidecar(result))? + "\n";
        let path = self.path(suffix, "json");
        self.write(path, text.as_bytes())
    }

    pub fn series(&mut self, suffix: &str, ts: &TimeSeries) -> Result<()> {
        let mut buf = Vec::new();
        ts.write_csv(&mut buf)?;
        let path = self.path(suffix, "csv");
        self.write(path, &buf)?;
        self.json(suffix, ts.meta.clone())
    }

    pub fn sweep(&mut self, suffix: &str, sr: &SweepResult) -> Result<()> {
        let mut buf = Vec::new();
        sr.write_csv(&mut buf)?;
        let path = self.path(suffix, "csv");
        self.write(path, &buf)?;
        self.json(suffix, sr.meta.clone())
    }

    /// A plain table; the sidecar carries `meta`.
    pub fn table(&mut self, suffix: &str, header: &[&str], rows: &[Vec<Cell>], meta: Value) -> Result<()> {
        let mut text = header.join(",") + "\n";
        for row in rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            text += &cells.join(",");
            text.push('\n');
        }
        let path = self.path(suffix, "csv");
        self.write(path, text.as_bytes())?;
        self.json(suffix, meta)
    }

    pub fn svg(&mut self, suffix: &str, document: impl FnOnce() -> String) -> Result<()> {
        if !self.plot {
            return Ok(());
        }
        let path = self.path(suffix, "svg");
        self.write(path, document().as_bytes())
    }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}
