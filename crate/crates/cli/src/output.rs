use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, Result};

/// Summary of one run, written as `manifest.json` when the run finishes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub build: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_seconds: f64,
    /// Wall time per time step, diagnostics excluded.
    pub seconds_per_step: Option<f64>,
    pub steps: u64,
    pub outputs: Vec<PathBuf>,
    pub conventions: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn build_id() -> String {
    format!(
        "{} {}{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        option_env!("LANDAU_BUILD_ID")
            .map(|id| format!(" ({id})"))
            .unwrap_or_default()
    )
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to `path.tmp` and renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_error(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_error(path))
}

pub(crate) fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// CSV writer printing floats with 17 significant digits.
pub(crate) struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let file = File::create(&path).map_err(io_error(&path))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path,
        };
        writeln!(w.out, "{}", header.join(",")).map_err(io_error(&w.path))?;
        Ok(w)
    }

    pub fn row(&mut self, fields: &[Field]) -> Result<()> {
        let line: Vec<String> = fields.iter().map(Field::render).collect();
        writeln!(self.out, "{}", line.join(",")).map_err(io_error(&self.path))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(io_error(&self.path))?;
        Ok(self.path)
    }
}

pub(crate) enum Field {
    Float(f64),
    Int(u64),
    Missing,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Float(x) => format!("{x:.16e}"),
            Field::Int(n) => n.to_string(),
            Field::Missing => String::new(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Float(x)
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Field::Missing, Field::Float)
    }
}
