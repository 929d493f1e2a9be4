//! Per-run manifest: config echo, seeds and SHA-256 of every artifact.
//!
//! No timestamps or absolute paths, so two runs with the same config and
//! seeds produce byte-identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub seeds: BTreeMap<&'static str, u64>,
    pub warnings: &'a [String],
    /// Artifact file name (relative to the output directory) to hex digest.
    pub artifacts: BTreeMap<String, String>,
}

/// Collects artifacts written under one output directory.
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.insert(name.to_owned(), sha256_hex(bytes));
        Ok(path)
    }

    /// Write `<command>.manifest.json` and return its path.
    pub fn finish(self, command: &str, config: &RunConfig, warnings: &[String]) -> Result<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            seeds: config.seeds(),
            warnings,
            artifacts: self.written,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join(format!("{command}.manifest.json"));
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
