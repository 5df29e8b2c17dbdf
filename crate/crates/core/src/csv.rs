//! The one CSV emitter every dump path goes through.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! re-parse recovers the exact value; integers and labels are written
//! verbatim. No quoting is needed because no emitted value contains a
//! comma.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<i64> for Cell {
    fn from(v: i64) -> Cell {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Cell {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Text(v.to_string())
    }
}

/// Renders rows under a header to a CSV string.
pub fn render_csv(header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "csv row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            )));
        }
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            match cell {
                Cell::Int(v) => write!(out, "{v}").unwrap(),
                Cell::Num(v) => {
                    if !v.is_finite() {
                        return Err(Error::Config(format!(
                            "non-finite value in csv row {i} column {j}"
                        )));
                    }
                    write!(out, "{v}").unwrap();
                }
                Cell::Text(v) => out.push_str(v),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes rows under a header to `path`.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    fs::write(path, render_csv(header, rows)?)?;
    Ok(())
}
