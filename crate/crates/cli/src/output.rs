use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Version of every CSV and JSON result layout written by the commands.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    /// Arguments that reproduce the run, with the config file expanded and
    /// the seed made explicit. Excludes `--out` and `--threads`.
    pub argv: Vec<String>,
    /// Parsed command arguments.
    pub args: serde_json::Value,
    /// Contents of `--config`, if one was given.
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub code_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Assertion failures; empty on success.
    pub failures: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn code_version() -> String {
    format!(
        "{} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("TRIMIX_GIT_DESCRIBE")
    )
}

/// Output directory that records a digest for every file written.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            schema_version: OUTPUT_SCHEMA_VERSION,
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(self.dir.join(name), e.into_error()))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
            path: name.to_string(),
            source,
        })?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    let path = dir.join(MANIFEST_NAME);
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}
