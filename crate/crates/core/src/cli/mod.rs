//! Experiment harness: run configuration, CSV emission, and the canned
//! experiment drivers behind the `utl` binary.

pub mod config;
pub mod experiments;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::{Experiment, ExperimentConfig};

/// Rectangular CSV with `#`-prefixed provenance lines ahead of the header.
/// Data cells are formatted with [`fmt_f64`] so doubles round-trip exactly.
#[derive(Debug, Clone)]
pub struct CsvTable {
    comments: Vec<String>,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(headers: &[&str]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for h in headers {
            if !seen.insert(*h) {
                return Err(Error::Config(format!("duplicate CSV header '{h}'")));
            }
        }
        Ok(CsvTable {
            comments: Vec::new(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        })
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push_row(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.headers.len() {
            return Err(Error::Config(format!(
                "row width {} does not match header width {}",
                cells.len(),
                self.headers.len()
            )));
        }
        self.rows.push(cells);
        Ok(())
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.headers.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to_file(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let mut f = std::fs::File::create(path).map_err(io_err)?;
        f.write_all(self.render().as_bytes()).map_err(io_err)
    }
}

/// 17 significant digits: enough for a lossless `f64` round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_bool(b: bool) -> String {
    if b { "true".into() } else { "false".into() }
}
