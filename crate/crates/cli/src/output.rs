//! Output files. Every CSV opens with `#` comment lines naming the tool
//! version, the column schema and the resolved-config hash, followed by a
//! header row. Next to it go `<stem>.config.toml` (the resolved config) and,
//! for solver runs, `<stem>.convergence.json`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    pub dir: PathBuf,
    pub stem: String,
}

impl Artifacts {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.output.dir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let a = Self {
            dir,
            stem: cfg.stem(),
        };
        let path = a.path("config.toml");
        fs::write(&path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        Ok(a)
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    pub fn csv(&self, cfg: &ExperimentConfig, schema: &str, columns: &[&str]) -> Result<CsvOut> {
        CsvOut::create(&self.path("csv"), cfg, schema, columns)
    }

    pub fn json<T: Serialize>(&self, suffix: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(suffix);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn header(cfg: &ExperimentConfig, schema: &str) -> String {
    format!(
        "# cdbound {VERSION}\n# schema: {schema}\n# config-sha256: {}\n",
        cfg.hash()
    )
}

pub struct CsvOut {
    pub path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(
        path: &Path,
        cfg: &ExperimentConfig,
        schema: &str,
        columns: &[&str],
    ) -> Result<Self> {
        let mut file = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        file.write_all(header(cfg, schema).as_bytes())?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    /// Opens a ledger for appending, writing the header only when the file
    /// is new or empty.
    pub fn append(
        path: &Path,
        cfg: &ExperimentConfig,
        schema: &str,
        columns: &[&str],
    ) -> Result<Self> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut file = BufWriter::new(file);
        if fresh {
            file.write_all(header(cfg, schema).as_bytes())?;
        }
        let mut writer = csv::Writer::from_writer(file);
        if fresh {
            writer.write_record(columns)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest round-tripping decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
