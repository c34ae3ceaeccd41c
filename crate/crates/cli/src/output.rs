//! Staged output files and the run manifest.
//!
//! Every file is written to a temporary sibling and renamed into place only
//! after the whole command succeeded, so a failed run leaves nothing behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub config_path: String,
    /// Resolved configuration, SI units.
    pub config: serde_json::Value,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    pub format: String,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub struct Staged {
    dir: PathBuf,
    files: Vec<(String, NamedTempFile)>,
}

impl Staged {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Opens a staged file; the returned handle is valid until `commit`.
    pub fn create(&mut self, name: &str) -> Result<&mut NamedTempFile> {
        let tmp = NamedTempFile::new_in(&self.dir).with_context(|| format!("staging {name}"))?;
        self.files.push((name.to_string(), tmp));
        Ok(&mut self.files.last_mut().expect("just pushed").1)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let f = self.create(name)?;
        f.write_all(contents).with_context(|| format!("writing {name}"))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (name, tmp) in self.files {
            let target = self.dir.join(&name);
            tmp.as_file().sync_all().with_context(|| format!("flushing {name}"))?;
            tmp.persist(&target).with_context(|| format!("renaming into {}", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}

/// Shortest round-trip decimal; scientific outside [1e-3, 1e7).
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e7).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// CSV preamble: provenance comments then the column header.
pub fn csv_header(out: &mut impl Write, manifest_hash: &str, extra: &[String], columns: &[&str]) -> Result<()> {
    writeln!(out, "# manifest_sha256={manifest_hash}")?;
    for line in extra {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{}", columns.join(","))?;
    Ok(())
}

pub fn csv_row(out: &mut impl Write, values: &[f64]) -> Result<()> {
    let cells: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(out, "{}", cells.join(","))?;
    Ok(())
}
