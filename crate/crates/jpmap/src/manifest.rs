//! Run manifests: the resolved configuration of a command plus the content
//! hash of the checkpoint it read or wrote.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha1::{Digest, Sha1};

use crate::error::{io_err, Result};

/// SHA-1 of `"blob <len>\0" + bytes`, the id git gives the same content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointRef {
    pub path: String,
    pub git_blob_sha1: String,
}

impl CheckpointRef {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        CheckpointRef {
            path: path.display().to_string(),
            git_blob_sha1: git_blob_hash(bytes),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub checkpoint: Option<CheckpointRef>,
    pub outputs: Vec<String>,
    pub converged: Option<bool>,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            checkpoint: None,
            outputs: Vec::new(),
            converged: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }
}
