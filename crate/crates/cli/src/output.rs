//! Table and report writers.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Sink {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    /// Writes `rows` as `<stem>.csv` or `<stem>.json`, per the chosen format.
    pub fn table<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<(), String> {
        let path = match self.format {
            Format::Csv => {
                let path = self.dir.join(format!("{stem}.csv"));
                let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                for r in rows {
                    w.serialize(r).map_err(|e| format!("{}: {e}", path.display()))?;
                }
                w.flush().map_err(|e| format!("{}: {e}", path.display()))?;
                path
            }
            Format::Json => self.write_json(stem, rows)?,
        };
        self.written.push(path);
        Ok(())
    }

    /// Reports are always JSON.
    pub fn report<T: Serialize + ?Sized>(&mut self, stem: &str, value: &T) -> Result<(), String> {
        let path = self.write_json(stem, value)?;
        self.written.push(path);
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&self, stem: &str, value: &T) -> Result<PathBuf, String> {
        let path = self.dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
