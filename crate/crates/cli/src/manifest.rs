//! Run manifests and output bookkeeping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fastdoc_core::trainer::write_atomic;
use fastdoc_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

pub const TOOL: &str = "fastdoc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_ms: u64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Every argument with defaults and derived paths filled in.
    pub config: Command,
    /// Path → sha256 of each file read.
    pub inputs: BTreeMap<String, String>,
    /// Path → sha256 of each file written, the manifest excluded.
    pub outputs: BTreeMap<String, String>,
    pub threads: usize,
    pub timings: Timings,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("manifest: {e}"),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn path_key(path: &Path) -> String {
    path.display().to_string()
}

/// Files written by one run. Unless committed, everything written is removed
/// on drop so a failed run leaves no partial outputs.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<(PathBuf, String)>,
    committed: bool,
}

impl Outputs {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.written.push((path.to_path_buf(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.written
            .iter()
            .map(|(p, d)| (path_key(p), d.clone()))
            .collect()
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (p, _) in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// `<path>.<suffix>`, keeping the full original file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}
