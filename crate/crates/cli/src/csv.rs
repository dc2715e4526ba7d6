//! Minimal CSV emission: comma separated, LF endings, one header row,
//! floats in round-trippable scientific notation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

/// One output cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(usize),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    body: String,
    rows: usize,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            body: String::new(),
            rows: 0,
        }
    }

    pub fn push(&mut self, cells: &[Cell]) {
        assert_eq!(
            cells.len(),
            self.header.len(),
            "row width must match header"
        );
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match *cell {
                Cell::Float(v) => self.body.push_str(&format_float(v)),
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Bool(v) => self.body.push_str(if v { "true" } else { "false" }),
            }
        }
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })
    }
}
