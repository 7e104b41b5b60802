use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path, shown_as: PathBuf) -> std::io::Result<Self> {
        let data = std::fs::read(path)?;
        Ok(Self {
            path: shown_as,
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub records_loaded: usize,
    pub lines_rejected: usize,
    /// Records within no city radius.
    pub records_unassigned: usize,
    pub per_city: BTreeMap<String, usize>,
    /// city -> year -> records
    pub per_city_period: BTreeMap<String, BTreeMap<String, usize>>,
    pub period_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub timings: Vec<StageTiming>,
    pub counts: Counts,
    pub warnings: Vec<String>,
    /// Stage metrics such as inertia or accuracy, keyed by stage.
    pub metrics: BTreeMap<String, serde_json::Value>,
    /// Every file written under the output directory, paths relative to it.
    pub outputs: Vec<FileHash>,
}

impl RunReport {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config,
            inputs: Vec::new(),
            timings: Vec::new(),
            counts: Counts::default(),
            warnings: Vec::new(),
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&self, name: &str) -> Option<&FileHash> {
        self.outputs.iter().find(|f| f.path == Path::new(name))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
