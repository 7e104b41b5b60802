use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::block::VectorBlock;
use super::geo::GeoPoint;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const UNASSIGNED: &str = "unassigned";

fn unassigned() -> String {
    UNASSIGNED.to_owned()
}

/// One person-crop observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    #[serde(default = "unassigned")]
    pub city: String,
    /// UTC seconds since the epoch.
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "vec")]
    pub vector_index: u64,
}

impl Record {
    pub fn point(&self) -> GeoPoint {
        GeoPoint::new(self.latitude, self.longitude)
    }

    pub fn row(&self) -> usize {
        self.vector_index as usize
    }
}

/// A manifest line that parsed but failed a range rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<Record>,
    pub rejected: Vec<RejectedLine>,
}

/// Parses JSONL manifest text.
///
/// Syntax errors and duplicate ids are hard errors; records with
/// out-of-range coordinates are collected in `rejected`.
pub fn parse_records<R: BufRead>(reader: R) -> Result<ParsedRecords> {
    let mut out = ParsedRecords::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId { id: record.id });
        }
        if let Err(e) = record.point().validate() {
            out.rejected.push(RejectedLine {
                line: line_no,
                id: record.id,
                reason: e.to_string(),
            });
            continue;
        }
        out.records.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
    pub vector_file: PathBuf,
    pub dim: usize,
    pub schema_version: u32,
}

impl Manifest {
    pub fn new(records: Vec<Record>, vector_file: impl Into<PathBuf>, dim: usize) -> Self {
        Self {
            records,
            vector_file: vector_file.into(),
            dim,
            schema_version: SCHEMA_VERSION,
        }
    }

    /// Same metadata, different records.
    pub fn with_records(&self, records: Vec<Record>) -> Self {
        Self {
            records,
            vector_file: self.vector_file.clone(),
            dim: self.dim,
            schema_version: self.schema_version,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Checks id uniqueness, coordinate ranges and that every record points
    /// at an existing row of `block`.
    pub fn validate(&self, block: &VectorBlock) -> Result<()> {
        if block.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: block.dim(),
            });
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        let count = block.count() as u64;
        for record in &self.records {
            if !seen.insert(record.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: record.id.clone(),
                });
            }
            record.point().validate()?;
            if record.vector_index >= count {
                return Err(Error::VectorIndexOutOfRange {
                    id: record.id.clone(),
                    index: record.vector_index,
                    count,
                });
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        self.write_jsonl(BufWriter::new(File::create(path)?))
    }

    /// Loads a manifest and its vector file, rejecting anything that does not
    /// validate.
    pub fn load(manifest_path: &Path, vector_path: &Path) -> Result<(Manifest, VectorBlock)> {
        let block = VectorBlock::load(vector_path)?;
        let parsed = parse_records(BufReader::new(File::open(manifest_path)?))?;
        if let Some(first) = parsed.rejected.first() {
            return Err(Error::MalformedLine {
                line: first.line,
                message: first.reason.clone(),
            });
        }
        let manifest = Manifest::new(parsed.records, vector_path, block.dim());
        manifest.validate(&block)?;
        Ok((manifest, block))
    }
}
