//! Per-stage provenance records.
//!
//! A manifest lists the content hash of every input and output of one
//! stage run plus the hash of the config block that governed it. A stage is
//! up to date when all recorded hashes still match what is on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::io::{self, sha256_path, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub tool_version: String,
    pub config_hash: String,
    /// Path → content hash.
    pub inputs: BTreeMap<PathBuf, String>,
    pub outputs: BTreeMap<PathBuf, String>,
    pub duration_ms: u128,
}

/// Content hashes of existing paths; missing paths are an error.
pub fn hash_paths(paths: &[PathBuf]) -> Result<BTreeMap<PathBuf, String>, IoError> {
    paths.iter().map(|p| Ok((p.clone(), sha256_path(p)?))).collect()
}

impl StageManifest {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        io::read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        io::write_json(path, self)
    }

    /// True when config, inputs and outputs all hash as recorded.
    pub fn is_current(&self, config_hash: &str, inputs: &BTreeMap<PathBuf, String>) -> bool {
        self.config_hash == config_hash
            && self.inputs == *inputs
            && self
                .outputs
                .iter()
                .all(|(p, h)| sha256_path(p).is_ok_and(|now| now == *h))
    }
}
