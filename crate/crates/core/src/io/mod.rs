//! Text file formats, VTK export and run reports.
//!
//! All readers report parse failures with a one-based line number.

mod config;
mod field_file;
mod mesh_file;
mod report;
mod vtk;

pub use config::{parse_config, read_config, DeltaSpec, RunConfig, CONFIG_KEYS};
pub use field_file::{format_field, parse_field, read_field, write_field};
pub use mesh_file::{format_mesh, parse_mesh, read_mesh, write_mesh};
pub use report::{read_report, write_report, MetricPart, RunReport};
pub use vtk::{export_vtk, format_vtk};

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, TmopError};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| TmopError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| TmopError::io(path, e))
}

/// Line cursor over a text file.
pub(crate) struct LineReader<'a> {
    path: PathBuf,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last_line: usize,
}

impl<'a> LineReader<'a> {
    pub(crate) fn new(text: &'a str, path: &Path) -> Self {
        LineReader {
            path: path.to_path_buf(),
            lines: text.lines().enumerate().peekable(),
            last_line: 0,
        }
    }

    pub(crate) fn error(&self, line: usize, message: impl Into<String>) -> TmopError {
        TmopError::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next line as `(line number, trimmed text)`; `what` names the expected content.
    pub(crate) fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last_line = i + 1;
                Ok((i + 1, l.trim()))
            }
            None => Err(self.error(self.last_line + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    /// Reads `key value` and returns the parsed value.
    pub(crate) fn header<T: FromStr>(&mut self, key: &str, section: &str) -> Result<T> {
        let (n, l) = self.next(&format!("'{key}' line of the {section}"))?;
        let mut tok = l.split_whitespace();
        match (tok.next(), tok.next(), tok.next()) {
            (Some(k), Some(v), None) if k == key => v
                .parse()
                .map_err(|_| self.error(n, format!("invalid value '{v}' for '{key}'"))),
            _ => Err(self.error(n, format!("expected '{key} <value>', found '{l}'"))),
        }
    }

    /// Parses exactly `count` whitespace-separated tokens.
    pub(crate) fn tokens<T: FromStr>(&self, line: usize, text: &str, count: usize, what: &str) -> Result<Vec<T>> {
        let tok: Vec<&str> = text.split_whitespace().collect();
        if tok.len() != count {
            return Err(self.error(line, format!("expected {count} {what}, found {}", tok.len())));
        }
        tok.iter()
            .map(|t| t.parse().map_err(|_| self.error(line, format!("invalid {what} '{t}'"))))
            .collect()
    }

    /// Fails if anything other than blank lines remains.
    pub(crate) fn finish(&mut self) -> Result<()> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Err(TmopError::Parse {
                    path: self.path.clone(),
                    line: i + 1,
                    message: "unexpected content after the last section".into(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_finite(reader: &LineReader, line: usize, text: &str, what: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| reader.error(line, format!("invalid {what} '{text}'")))?;
    if !v.is_finite() {
        return Err(reader.error(line, format!("{what} '{text}' is not finite")));
    }
    Ok(v)
}
