//! Records, on-disk formats, geo-radius filtering and deterministic sampling.

mod block;
mod geo;
mod manifest;

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use block::{VectorBlock, MAGIC, VERSION};
pub use geo::{
    default_anchors, destination, haversine_km, load_anchors, validate_anchors, CityAnchor,
    GeoPoint, EARTH_RADIUS_KM,
};
pub use manifest::{parse_records, Manifest, ParsedRecords, Record, RejectedLine, SCHEMA_VERSION, UNASSIGNED};

use crate::error::{Error, Result};

/// Records within `radius_km` (inclusive) of `anchor`, relabelled with the
/// anchor's name. Input order is preserved.
pub fn filter_by_city(manifest: &Manifest, anchor: &CityAnchor, radius_km: f64) -> Result<Manifest> {
    if !(radius_km >= 0.0) || !radius_km.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "radius must be a non-negative finite number, got {radius_km}"
        )));
    }
    let centre = anchor.point();
    centre.validate()?;
    let mut kept = Vec::new();
    for record in &manifest.records {
        if haversine_km(record.point(), centre)? <= radius_km {
            let mut r = record.clone();
            r.city = anchor.name.clone();
            kept.push(r);
        }
    }
    Ok(manifest.with_records(kept))
}

/// Uniform sample without replacement of `min(n, len)` records. The output
/// order is itself random, and fully determined by `seed`.
pub fn sample_records(manifest: &Manifest, n: usize, seed: u64) -> Manifest {
    let picked = sample_indices(manifest.len(), n, seed);
    manifest.with_records(picked.into_iter().map(|i| manifest.records[i].clone()).collect())
}

pub(crate) fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, len, n.min(len)).into_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Year,
}

/// Inclusive range of calendar years accepted when bucketing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub const DEFAULT: YearRange = YearRange {
        start: 2000,
        end: 2015,
    };

    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidParameter(format!(
                "year range {start}..={end} is empty"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

impl Default for YearRange {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// UTC calendar year of an epoch timestamp.
pub fn utc_year(timestamp: i64) -> Option<i32> {
    DateTime::from_timestamp(timestamp, 0).map(|t| t.year())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRecord {
    pub id: String,
    pub timestamp: i64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PeriodPartition {
    pub buckets: BTreeMap<i32, Manifest>,
    pub rejected: Vec<RejectedRecord>,
}

impl PeriodPartition {
    pub fn total(&self) -> usize {
        self.buckets.values().map(Manifest::len).sum::<usize>() + self.rejected.len()
    }
}

/// Buckets records by UTC calendar year. Records outside `range` go to the
/// reject list.
pub fn partition_by_period(
    manifest: &Manifest,
    granularity: Granularity,
    range: YearRange,
) -> PeriodPartition {
    let Granularity::Year = granularity;
    let mut grouped: BTreeMap<i32, Vec<Record>> = BTreeMap::new();
    let mut rejected = Vec::new();
    for record in &manifest.records {
        match utc_year(record.timestamp) {
            Some(year) if range.contains(year) => {
                grouped.entry(year).or_default().push(record.clone())
            }
            Some(year) => rejected.push(RejectedRecord {
                id: record.id.clone(),
                timestamp: record.timestamp,
                reason: format!("year {year} outside {}..={}", range.start, range.end),
            }),
            None => rejected.push(RejectedRecord {
                id: record.id.clone(),
                timestamp: record.timestamp,
                reason: "timestamp not representable".into(),
            }),
        }
    }
    PeriodPartition {
        buckets: grouped
            .into_iter()
            .map(|(year, records)| (year, manifest.with_records(records)))
            .collect(),
        rejected,
    }
}
