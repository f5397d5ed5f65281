//! Sampled trajectories and sweep grids, with CSV + JSON-sidecar output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::fnv1a;

/// Named real channels sampled on a common τ grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub tau: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl TimeSeries {
    pub fn new(tau: Vec<f64>) -> Self {
        TimeSeries { tau, channels: Vec::new(), meta: serde_json::Value::Null }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.tau.len() {
            return Err(Error::domain(format!(
                "channel {name} has {} samples, grid has {}",
                values.len(),
                self.tau.len()
            )));
        }
        if self.get(&name).is_some() {
            return Err(Error::domain(format!("duplicate channel {name}")));
        }
        self.channels.push((name, values));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.get(name).ok_or_else(|| Error::domain(format!("no channel named {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "tau")?;
        for (n, _) in &self.channels {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (i, t) in self.tau.iter().enumerate() {
            write!(w, "{}", fmt_num(*t))?;
            for (_, v) in &self.channels {
                write!(w, ",{}", fmt_num(v[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(&csv, buf)?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(csv)
    }
}

/// Shortest round-trip representation, so repeated runs are byte identical.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:?}")
    }
}

/// Value of one grid cell: numbers per channel or the reason it is masked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CellValue {
    Ok(Vec<f64>),
    Masked(String),
}

/// Rectangular two-axis grid of order parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub x_name: String,
    pub x: Vec<f64>,
    pub y_name: String,
    pub y: Vec<f64>,
    pub channels: Vec<String>,
    /// Row-major over (x, y): cell (i, j) at i * y.len() + j.
    pub cells: Vec<CellValue>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &CellValue {
        &self.cells[i * self.y.len() + j]
    }

    /// Channel value of a cell; None if masked.
    pub fn value(&self, i: usize, j: usize, channel: &str) -> Option<f64> {
        let c = self.channels.iter().position(|n| n == channel)?;
        match self.cell(i, j) {
            CellValue::Ok(v) => v.get(c).copied(),
            CellValue::Masked(_) => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "{},{}", self.x_name, self.y_name)?;
        for c in &self.channels {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",error")?;
        for (i, x) in self.x.iter().enumerate() {
            for (j, y) in self.y.iter().enumerate() {
                write!(w, "{},{}", fmt_num(*x), fmt_num(*y))?;
                match self.cell(i, j) {
                    CellValue::Ok(v) => {
                        for val in v {
                            write!(w, ",{}", fmt_num(*val))?;
                        }
                        writeln!(w, ",")?;
                    }
                    CellValue::Masked(e) => {
                        for _ in &self.channels {
                            write!(w, ",nan")?;
                        }
                        writeln!(w, ",\"{}\"", e.replace('"', "'"))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(&csv, buf)?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(csv)
    }
}

/// `<prefix>-<16 hex digits>` from the canonical JSON of `params`.
pub fn hashed_stem<T: Serialize>(prefix: &str, params: &T) -> Result<String> {
    let text = serde_json::to_string(params)?;
    Ok(format!("{prefix}-{:016x}", fnv1a(text.into_bytes())))
}
