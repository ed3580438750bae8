use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{fmt_f64, ExperimentConfig};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: &'static str,
    pub files: Vec<FileEntry>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    /// Headline numbers of the run, e.g. the final estimate.
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": "liebridge",
            "version": self.version,
            "config": self.config.to_json(),
            "files": self.files.iter().map(|f| serde_json::json!({
                "name": f.name, "sha256": f.sha256, "bytes": f.bytes,
            })).collect::<Vec<_>>(),
            "wall_time_s": self.wall_time_s,
            "warnings": self.warnings,
            "summary": self.summary,
        })
    }
}

/// Writes artifacts into one directory and remembers their checksums.
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(FileEntry { name: name.to_string(), sha256, bytes: bytes.len() });
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(self.dir.join(name), e.into_error()))?;
        self.write(name, &bytes)
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialise");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `manifest.json` is not listed in itself.
    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), CliError> {
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest.to_json()).expect("json values serialise");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn nums(xs: impl IntoIterator<Item = f64>) -> Vec<String> {
    xs.into_iter().map(fmt_f64).collect()
}
