//! Minimal CSV emission with a fixed number format: 17 significant digits,
//! '.' decimal separator and '\n' line endings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

pub fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// A CSV table under construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    body: String,
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
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

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), body: String::new() }
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match the header");
        for (i, cell) in row.into_iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match cell {
                Cell::Float(v) => self.body.push_str(&float(v)),
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Text(s) => {
                    if s.contains([',', '"', '\n']) {
                        write!(self.body, "\"{}\"", s.replace('"', "\"\"")).unwrap()
                    } else {
                        self.body.push_str(&s)
                    }
                }
            }
        }
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(name);
        std::fs::write(&path, self.render()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}
