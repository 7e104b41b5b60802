//! Synthetic corpora with known latent structure.
//!
//! Each city draws records from a mixture over shared latent style clusters.
//! Per-bucket cluster counts are allocated exactly (largest remainder), so a
//! planted shift of mixture mass moves precisely that share of records and
//! nothing else changes between periods.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::corpus::{default_anchors, destination, CityAnchor, GeoPoint, Manifest, Record, VectorBlock, YearRange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedShift {
    pub city: String,
    /// First year with the shifted mixture; it persists afterwards.
    pub year: i32,
    pub from_cluster: usize,
    pub to_cluster: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    pub cities: Vec<CityAnchor>,
    pub years: YearRange,
    pub per_bucket: usize,
    pub clusters: usize,
    pub dim: usize,
    /// Standard deviation of records around their cluster centre.
    pub spread: f64,
    /// Standard deviation of cluster centre coordinates.
    pub center_scale: f64,
    /// Dirichlet concentration of each city's base mixture.
    pub concentration: f64,
    /// Records are scattered uniformly within this distance of their anchor.
    pub scatter_km: f64,
    /// Extra records placed far from every anchor.
    pub outliers: usize,
    pub shifts: Vec<PlantedShift>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 7,
            cities: default_anchors(),
            years: YearRange::new(2013, 2015).unwrap(),
            per_bucket: 2_000,
            clusters: 32,
            dim: 16,
            spread: 0.5,
            center_scale: 10.0,
            concentration: 1.0,
            scatter_km: 30.0,
            outliers: 0,
            shifts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: SynthParams,
    pub centers: Vec<Vec<f32>>,
    /// Latent cluster per manifest record, `None` for outliers.
    pub cluster_of: Vec<Option<usize>>,
    /// city -> year -> mixture weights actually used.
    pub mixtures: BTreeMap<String, BTreeMap<i32, Vec<f64>>>,
}

impl GroundTruth {
    /// Codebook bin of each latent cluster centre.
    pub fn bin_map(&self, codebook: &Codebook) -> Vec<usize> {
        self.centers.iter().map(|c| codebook.nearest(c).0).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: Manifest,
    pub block: VectorBlock,
    pub truth: GroundTruth,
}

impl SynthCorpus {
    /// Writes `manifest.jsonl`, `vectors.tlvb` and `truth.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.block.save(&dir.join("vectors.tlvb"))?;
        self.manifest.save_jsonl(&dir.join("manifest.jsonl"))?;
        std::fs::write(dir.join("truth.json"), serde_json::to_vec(&self.truth)?)?;
        Ok(())
    }
}

/// Splits `n` items by `weights` so the counts sum to `n` exactly.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn year_bounds(year: i32) -> Result<(i64, i64)> {
    let start = |y: i32| {
        NaiveDate::from_ymd_opt(y, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .map(|t| Utc.from_utc_datetime(&t).timestamp())
            .ok_or_else(|| Error::InvalidParameter(format!("year {y} not representable")))
    };
    Ok((start(year)?, start(year + 1)?))
}

fn validate(params: &SynthParams) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    if params.cities.is_empty() || params.clusters == 0 || params.dim == 0 {
        return bad("cities, clusters and dim must be non-empty".into());
    }
    if !(params.spread >= 0.0 && params.center_scale > 0.0 && params.concentration > 0.0 && params.scatter_km >= 0.0) {
        return bad("spread, center_scale, concentration and scatter_km must be positive".into());
    }
    crate::corpus::validate_anchors(&params.cities)?;
    for s in &params.shifts {
        if !params.cities.iter().any(|c| c.name == s.city) {
            return Err(Error::InfeasibleShift(format!("unknown city {:?}", s.city)));
        }
        if s.year <= params.years.start || s.year > params.years.end {
            return Err(Error::InfeasibleShift(format!(
                "year {} needs a preceding period inside {}..={}",
                s.year, params.years.start, params.years.end
            )));
        }
        if s.from_cluster >= params.clusters || s.to_cluster >= params.clusters || s.from_cluster == s.to_cluster {
            return Err(Error::InfeasibleShift(format!(
                "clusters {} -> {} invalid for {} clusters",
                s.from_cluster, s.to_cluster, params.clusters
            )));
        }
        if !(s.mass > 0.0 && s.mass <= 1.0) {
            return Err(Error::InfeasibleShift(format!("mass {} not in (0, 1]", s.mass)));
        }
    }
    Ok(())
}

/// Generates a corpus. Shifted mixtures that would go negative are rejected.
pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    validate(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers: Vec<Vec<f32>> = (0..params.clusters)
        .map(|_| {
            (0..params.dim)
                .map(|_| (rng.sample::<f64, _>(StandardNormal) * params.center_scale) as f32)
                .collect()
        })
        .collect();
    let gamma = Gamma::new(params.concentration, 1.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut mixtures: BTreeMap<String, BTreeMap<i32, Vec<f64>>> = BTreeMap::new();
    let mut records = Vec::new();
    let mut rows: Vec<f32> = Vec::new();
    let mut cluster_of = Vec::new();

    for anchor in &params.cities {
        let raw: Vec<f64> = (0..params.clusters).map(|_| gamma.sample(&mut rng).max(1e-12)).collect();
        let total: f64 = raw.iter().sum();
        let mut mixture: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let per_year = mixtures.entry(anchor.name.clone()).or_default();

        for year in params.years.start..=params.years.end {
            for s in params.shifts.iter().filter(|s| s.city == anchor.name && s.year == year) {
                if mixture[s.from_cluster] < s.mass {
                    return Err(Error::InfeasibleShift(format!(
                        "{} {}: cluster {} holds {:.4}, cannot give {}",
                        s.city, year, s.from_cluster, mixture[s.from_cluster], s.mass
                    )));
                }
                mixture[s.from_cluster] -= s.mass;
                mixture[s.to_cluster] += s.mass;
            }
            per_year.insert(year, mixture.clone());

            let quotas = largest_remainder(&mixture, params.per_bucket);
            let mut labels: Vec<usize> = quotas
                .iter()
                .enumerate()
                .flat_map(|(c, &q)| std::iter::repeat_n(c, q))
                .collect();
            labels.shuffle(&mut rng);
            let (t0, t1) = year_bounds(year)?;
            for (i, &cluster) in labels.iter().enumerate() {
                let bearing = rng.random_range(0.0..360.0);
                let distance = params.scatter_km * rng.random::<f64>().sqrt();
                let p = destination(anchor.point(), bearing, distance);
                records.push(Record {
                    id: format!("{}-{}-{:06}", slug(&anchor.name), year, i),
                    city: anchor.name.clone(),
                    timestamp: rng.random_range(t0..t1),
                    longitude: p.lon,
                    latitude: p.lat,
                    vector_index: cluster_of.len() as u64,
                });
                for &c in &centers[cluster] {
                    rows.push((f64::from(c) + rng.sample::<f64, _>(StandardNormal) * params.spread) as f32);
                }
                cluster_of.push(Some(cluster));
            }
        }
    }

    // Southern Pacific, far from every anchor.
    let (t0, _) = year_bounds(params.years.start)?;
    let (_, t_end) = year_bounds(params.years.end)?;
    for i in 0..params.outliers {
        let p = GeoPoint::new(rng.random_range(-60.0..-50.0), rng.random_range(-150.0..-100.0));
        let cluster = rng.random_range(0..params.clusters);
        records.push(Record {
            id: format!("outlier-{i:06}"),
            city: crate::corpus::UNASSIGNED.to_owned(),
            timestamp: rng.random_range(t0..t_end),
            longitude: p.lon,
            latitude: p.lat,
            vector_index: cluster_of.len() as u64,
        });
        for &c in &centers[cluster] {
            rows.push((f64::from(c) + rng.sample::<f64, _>(StandardNormal) * params.spread) as f32);
        }
        cluster_of.push(None);
    }

    let block = VectorBlock::new(params.dim, rows)?;
    let manifest = Manifest::new(records, "vectors.tlvb", params.dim);
    Ok(SynthCorpus {
        manifest,
        block,
        truth: GroundTruth {
            params: params.clone(),
            centers,
            cluster_of,
            mixtures,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{filter_by_city, partition_by_period, Granularity};

    fn small() -> SynthParams {
        SynthParams {
            cities: default_anchors().into_iter().take(2).collect(),
            years: YearRange::new(2010, 2011).unwrap(),
            per_bucket: 200,
            clusters: 5,
            dim: 3,
            outliers: 10,
            ..SynthParams::default()
        }
    }

    #[test]
    fn largest_remainder_is_exact() {
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 4), [2, 1, 1]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), [4, 3, 3]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 3), [0, 0]);
        let c = largest_remainder(&[0.123, 0.456, 0.421], 1000);
        assert_eq!(c.iter().sum::<usize>(), 1000);
        assert_eq!(c, [123, 456, 421]);
    }

    #[test]
    fn generates_valid_corpus() {
        let corpus = generate(&small()).unwrap();
        assert_eq!(corpus.manifest.len(), 2 * 2 * 200 + 10);
        corpus.manifest.validate(&corpus.block).unwrap();
        assert_eq!(corpus.truth.cluster_of.len(), corpus.block.count());
        let london = &small().cities[0];
        let kept = filter_by_city(&corpus.manifest, london, 100.0).unwrap();
        assert_eq!(kept.len(), 400);
        let parts = partition_by_period(&kept, Granularity::Year, YearRange::DEFAULT);
        assert_eq!(parts.buckets.keys().copied().collect::<Vec<_>>(), [2010, 2011]);
        assert!(parts.rejected.is_empty());
    }

    #[test]
    fn is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.block, b.block);
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn planted_shift_moves_exact_counts() {
        let mut p = small();
        let city = p.cities[1].name.clone();
        let base = generate(&p).unwrap().truth.mixtures[&city][&2010].clone();
        let from = (0..5).max_by(|&a, &b| base[a].total_cmp(&base[b])).unwrap();
        let to = (from + 1) % 5;
        p.shifts.push(PlantedShift { city: city.clone(), year: 2011, from_cluster: from, to_cluster: to, mass: 0.05 });
        let corpus = generate(&p).unwrap();
        let count = |year: i32, cluster: usize| {
            corpus
                .manifest
                .records
                .iter()
                .zip(&corpus.truth.cluster_of)
                .filter(|(r, c)| r.city == city && crate::corpus::utc_year(r.timestamp) == Some(year) && **c == Some(cluster))
                .count() as i64
        };
        assert_eq!(count(2011, from) - count(2010, from), -10);
        assert_eq!(count(2011, to) - count(2010, to), 10);
    }

    #[test]
    fn infeasible_shifts_are_rejected() {
        let mut p = small();
        let city = p.cities[0].name.clone();
        p.shifts.push(PlantedShift { city: city.clone(), year: 2011, from_cluster: 0, to_cluster: 1, mass: 1.0 });
        assert!(matches!(generate(&p), Err(Error::InfeasibleShift(_))));
        p.shifts[0] = PlantedShift { city, year: 2010, from_cluster: 0, to_cluster: 1, mass: 0.01 };
        assert!(matches!(generate(&p), Err(Error::InfeasibleShift(_))));
    }
}
