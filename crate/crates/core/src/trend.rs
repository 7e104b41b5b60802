//! Thresholded temporal subtraction of codeword vectors, and retrieval of
//! the records that best illustrate a codeword.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{csv_field, Codebook, CodewordVector};
use crate::corpus::{Manifest, VectorBlock};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Per-bin change between two codeword vectors, split into rising (`plus`),
/// falling (`minus`) and unchanged (`zero`) bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendDescriptor {
    pub k: usize,
    pub threshold: f64,
    /// bin -> |delta| for delta > threshold
    pub plus: BTreeMap<usize, f64>,
    /// bin -> |delta| for delta < -threshold
    pub minus: BTreeMap<usize, f64>,
    pub zero: BTreeSet<usize>,
    pub period_from: String,
    pub period_to: String,
    pub city: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinMagnitude {
    pub bin: usize,
    pub mag: f64,
}

/// JSON shape of a [`TrendDescriptor`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendRecord {
    pub city: String,
    pub from: String,
    pub to: String,
    pub threshold: f64,
    pub k: usize,
    pub plus: Vec<BinMagnitude>,
    pub minus: Vec<BinMagnitude>,
}

impl TrendDescriptor {
    pub fn to_record(&self) -> TrendRecord {
        let list = |m: &BTreeMap<usize, f64>| {
            m.iter()
                .map(|(&bin, &mag)| BinMagnitude { bin, mag })
                .collect()
        };
        TrendRecord {
            city: self.city.clone(),
            from: self.period_from.clone(),
            to: self.period_to.clone(),
            threshold: self.threshold,
            k: self.k,
            plus: list(&self.plus),
            minus: list(&self.minus),
        }
    }

    pub fn from_record(record: &TrendRecord) -> Result<Self> {
        let mut plus = BTreeMap::new();
        let mut minus = BTreeMap::new();
        for (src, dst) in [(&record.plus, &mut plus), (&record.minus, &mut minus)] {
            for e in src {
                if e.bin >= record.k || !(e.mag > record.threshold) {
                    return Err(Error::InvalidParameter(format!(
                        "bin {} / magnitude {} invalid for k {} and threshold {}",
                        e.bin, e.mag, record.k, record.threshold
                    )));
                }
                dst.insert(e.bin, e.mag);
            }
        }
        if plus.keys().any(|b| minus.contains_key(b)) {
            return Err(Error::InvalidParameter("bin listed as both rising and falling".into()));
        }
        let zero = (0..record.k)
            .filter(|b| !plus.contains_key(b) && !minus.contains_key(b))
            .collect();
        Ok(Self {
            k: record.k,
            threshold: record.threshold,
            plus,
            minus,
            zero,
            period_from: record.from.clone(),
            period_to: record.to.clone(),
            city: record.city.clone(),
        })
    }

    pub const CSV_HEADER: &'static str = "city,from,to,bin,direction,magnitude";

    /// Long-format rows, rising bins first.
    pub fn csv_rows(&self) -> Vec<String> {
        let prefix = format!(
            "{},{},{}",
            csv_field(&self.city),
            csv_field(&self.period_from),
            csv_field(&self.period_to)
        );
        self.plus
            .iter()
            .map(|(b, m)| format!("{prefix},{b},plus,{m}"))
            .chain(self.minus.iter().map(|(b, m)| format!("{prefix},{b},minus,{m}")))
            .collect()
    }
}

/// Classifies every bin of `now - prev`. A change of exactly `threshold` in
/// magnitude counts as unchanged.
pub fn compute_ftd(now: &CodewordVector, prev: &CodewordVector, threshold: f64) -> Result<TrendDescriptor> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    if now.k() != prev.k() {
        return Err(Error::Incompatible(format!("k {} vs {}", now.k(), prev.k())));
    }
    if now.city != prev.city {
        return Err(Error::Incompatible(format!("city {:?} vs {:?}", now.city, prev.city)));
    }
    let mut plus = BTreeMap::new();
    let mut minus = BTreeMap::new();
    let mut zero = BTreeSet::new();
    for (bin, (a, b)) in now.bins.iter().zip(&prev.bins).enumerate() {
        let delta = a - b;
        if delta > threshold {
            plus.insert(bin, delta.abs());
        } else if delta < -threshold {
            minus.insert(bin, delta.abs());
        } else {
            zero.insert(bin);
        }
    }
    Ok(TrendDescriptor {
        k: now.k(),
        threshold,
        plus,
        minus,
        zero,
        period_from: prev.period.clone(),
        period_to: now.period.clone(),
        city: now.city.clone(),
    })
}

fn ranked(bins: &BTreeMap<usize, f64>, n: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = bins.iter().map(|(&b, &m)| (b, m)).collect();
    all.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    all.truncate(n);
    all
}

/// `(bin, magnitude)` pairs, strongest first.
pub type Ranked = Vec<(usize, f64)>;

/// The `n` strongest rising and falling bins, by magnitude then bin index.
pub fn top_trends(ftd: &TrendDescriptor, n: usize) -> (Ranked, Ranked) {
    (ranked(&ftd.plus, n), ranked(&ftd.minus, n))
}

/// One descriptor per adjacent pair of a year-labelled series.
pub fn trend_series(vectors: &[CodewordVector], threshold: f64) -> Result<Vec<TrendDescriptor>> {
    if vectors.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two periods, got {}",
            vectors.len()
        )));
    }
    let years: Vec<i64> = vectors
        .iter()
        .map(|v| {
            v.period.trim().parse::<i64>().map_err(|_| {
                Error::InvalidParameter(format!("period label {:?} is not a year", v.period))
            })
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<String> = years
        .windows(2)
        .filter(|w| w[1] != w[0] + 1)
        .map(|w| format!("{} -> {}", w[0], w[1]))
        .collect();
    if !gaps.is_empty() {
        return Err(Error::PeriodGap(gaps.join(", ")));
    }
    vectors
        .windows(2)
        .map(|w| compute_ftd(&w[1], &w[0], threshold))
        .collect()
}

/// Records of one codeword, nearest to its centroid first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub bin: usize,
    pub record_ids: Vec<String>,
    pub distances: Vec<f64>,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    /// `m` entries picked uniformly at random, kept in ascending-distance order.
    pub fn random_subset(&self, m: usize, seed: u64) -> ExemplarSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, self.len(), m.min(self.len())).into_vec();
        picked.sort_unstable();
        ExemplarSet {
            bin: self.bin,
            record_ids: picked.iter().map(|&i| self.record_ids[i].clone()).collect(),
            distances: picked.iter().map(|&i| self.distances[i]).collect(),
        }
    }
}

/// Among records assigned to `bin`, the `n` closest to its centroid.
/// Equal distances keep manifest order.
pub fn nearest_exemplars(
    codebook: &Codebook,
    bin: usize,
    manifest: &Manifest,
    block: &VectorBlock,
    n: usize,
) -> Result<ExemplarSet> {
    if bin >= codebook.k() {
        return Err(Error::InvalidParameter(format!(
            "bin {bin} out of range for k = {}",
            codebook.k()
        )));
    }
    if block.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: block.dim(),
        });
    }
    let mut hits: Vec<(f64, &str)> = Vec::new();
    for record in &manifest.records {
        let row = block.get(record.row()).ok_or_else(|| Error::VectorIndexOutOfRange {
            id: record.id.clone(),
            index: record.vector_index,
            count: block.count() as u64,
        })?;
        let (nearest, dist) = codebook.nearest(row);
        if nearest == bin {
            hits.push((dist, record.id.as_str()));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits.truncate(n);
    Ok(ExemplarSet {
        bin,
        record_ids: hits.iter().map(|h| h.1.to_owned()).collect(),
        distances: hits.iter().map(|h| h.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Record;
    use proptest::prelude::*;
    use rand::Rng;

    fn cv(bins: &[f64], period: &str) -> CodewordVector {
        CodewordVector {
            bins: bins.to_vec(),
            normalization: crate::codebook::Normalization::L1,
            support: 100,
            city: "Paris".into(),
            period: period.into(),
        }
    }

    fn normalised(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    #[test]
    fn identical_inputs_have_no_trend() {
        let v = cv(&[0.1, 0.2, 0.7], "2013");
        let f = compute_ftd(&v, &v, 0.01).unwrap();
        assert!(f.plus.is_empty() && f.minus.is_empty());
        assert_eq!(f.zero.len(), 3);
    }

    #[test]
    fn hand_example() {
        let prev = cv(&[0.25, 0.25, 0.25, 0.25], "2012");
        let now = cv(&[0.40, 0.10, 0.25, 0.25], "2013");
        let f = compute_ftd(&now, &prev, 0.01).unwrap();
        assert_eq!(f.plus.keys().copied().collect::<Vec<_>>(), [0]);
        assert!((f.plus[&0] - 0.15).abs() < 1e-12);
        assert_eq!(f.minus.keys().copied().collect::<Vec<_>>(), [1]);
        assert!((f.minus[&1] - 0.15).abs() < 1e-12);
        assert_eq!(f.zero.iter().copied().collect::<Vec<_>>(), [2, 3]);
        assert_eq!((f.period_from.as_str(), f.period_to.as_str()), ("2012", "2013"));
    }

    #[test]
    fn exact_threshold_is_unchanged() {
        let prev = cv(&[0.5, 0.5], "1");
        let now = cv(&[0.75, 0.25], "2");
        let f = compute_ftd(&now, &prev, 0.25).unwrap();
        assert!(f.plus.is_empty() && f.minus.is_empty());
    }

    #[test]
    fn rejects_mismatches() {
        let a = cv(&[0.5, 0.5], "1");
        let b = cv(&[1.0], "2");
        assert!(compute_ftd(&a, &b, 0.01).is_err());
        let mut c = cv(&[0.5, 0.5], "2");
        c.city = "Tokyo".into();
        assert!(compute_ftd(&a, &c, 0.01).is_err());
        assert!(compute_ftd(&a, &a, -0.1).is_err());
    }

    #[test]
    fn top_trend_ordering() {
        let prev = cv(&[0.25, 0.25, 0.25, 0.25], "1");
        let now = cv(&[0.40, 0.10, 0.25, 0.25], "2");
        let f = compute_ftd(&now, &prev, 0.01).unwrap();
        let (rising, falling) = top_trends(&f, 3);
        assert_eq!(rising.len(), 1);
        assert_eq!(rising[0].0, 0);
        assert_eq!(falling[0].0, 1);
        let (r0, f0) = top_trends(&f, 0);
        assert!(r0.is_empty() && f0.is_empty());

        let mut tied = f.clone();
        tied.plus = BTreeMap::from([(7, 0.05), (2, 0.05), (4, 0.09)]);
        let (rising, _) = top_trends(&tied, 3);
        assert_eq!(rising, [(4, 0.09), (2, 0.05), (7, 0.05)]);
    }

    #[test]
    fn series_counts_and_gaps() {
        let flat = [0.5, 0.5];
        let series = [cv(&flat, "2010"), cv(&flat, "2011"), cv(&flat, "2012")];
        let out = trend_series(&series, 0.01).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|d| d.plus.is_empty() && d.minus.is_empty()));

        let gap = [cv(&flat, "2010"), cv(&flat, "2012")];
        match trend_series(&gap, 0.01) {
            Err(Error::PeriodGap(msg)) => assert!(msg.contains("2010 -> 2012")),
            other => panic!("{other:?}"),
        }
        let dup = [cv(&flat, "2010"), cv(&flat, "2010")];
        assert!(matches!(trend_series(&dup, 0.01), Err(Error::PeriodGap(_))));
        assert!(trend_series(&series[..1], 0.01).is_err());
    }

    #[test]
    fn planted_shift_shows_up_only_at_its_period() {
        let base = [0.2, 0.3, 0.1, 0.4];
        let shifted = [0.2, 0.22, 0.18, 0.4];
        let series = [cv(&base, "2001"), cv(&base, "2002"), cv(&shifted, "2003"), cv(&shifted, "2004")];
        let out = trend_series(&series, 0.01).unwrap();
        assert!(out[0].plus.is_empty() && out[0].minus.is_empty());
        assert_eq!(out[1].plus.keys().copied().collect::<Vec<_>>(), [2]);
        assert_eq!(out[1].minus.keys().copied().collect::<Vec<_>>(), [1]);
        assert!(out[2].plus.is_empty() && out[2].minus.is_empty());
    }

    #[test]
    fn json_and_csv_shapes() {
        let prev = cv(&[0.25, 0.25, 0.25, 0.25], "2012");
        let now = cv(&[0.40, 0.10, 0.25, 0.25], "2013");
        let f = compute_ftd(&now, &prev, 0.01).unwrap();
        let json = serde_json::to_value(f.to_record()).unwrap();
        assert_eq!(json["city"], "Paris");
        assert_eq!(json["from"], "2012");
        assert_eq!(json["plus"][0]["bin"], 0);
        assert_eq!(json["minus"][0]["bin"], 1);
        let back = TrendDescriptor::from_record(&f.to_record()).unwrap();
        assert_eq!(back, f);
        let rows = f.csv_rows();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("Paris,2012,2013,0,plus,"));
    }

    fn exemplar_fixture() -> (Codebook, Manifest, VectorBlock) {
        let cb = Codebook::from_centroids(
            VectorBlock::from_rows(1, &[[0.0f32], [10.0]]).unwrap(),
        )
        .unwrap();
        let values = [0.0f32, 1.0, -0.5, 9.0, 3.0, 12.0, 0.25];
        let block = VectorBlock::from_rows(1, &values.iter().map(|v| [*v]).collect::<Vec<_>>()).unwrap();
        let records = (0..values.len())
            .map(|i| Record {
                id: format!("r{i}"),
                city: "Paris".into(),
                timestamp: 0,
                longitude: 0.0,
                latitude: 0.0,
                vector_index: i as u64,
            })
            .collect();
        (cb, Manifest::new(records, "v", 1), block)
    }

    #[test]
    fn exemplars_rank_by_distance() {
        let (cb, m, block) = exemplar_fixture();
        let ex = nearest_exemplars(&cb, 0, &m, &block, 3).unwrap();
        assert_eq!(ex.record_ids, ["r0", "r6", "r2"]);
        assert_eq!(ex.distances[0], 0.0);
        let all = nearest_exemplars(&cb, 0, &m, &block, 100).unwrap();
        assert_eq!(all.record_ids, ["r0", "r6", "r2", "r1", "r4"]);
        let far = nearest_exemplars(&cb, 1, &m, &block, 5).unwrap();
        assert_eq!(far.record_ids, ["r3", "r5"]);
        assert!(nearest_exemplars(&cb, 2, &m, &block, 1).is_err());

        let sub = all.random_subset(2, 5);
        assert_eq!(sub.len(), 2);
        assert!(sub.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_bin_gives_empty_set() {
        let (_, m, block) = exemplar_fixture();
        let cb = Codebook::from_centroids(VectorBlock::from_rows(1, &[[0.0f32], [100.0]]).unwrap()).unwrap();
        assert!(nearest_exemplars(&cb, 1, &m, &block, 3).unwrap().is_empty());
    }

    #[test]
    fn exemplars_match_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 3;
        let block = VectorBlock::new(dim, (0..300 * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let cb = Codebook::from_centroids(block.select(&[0, 50, 100, 150])).unwrap();
        let records: Vec<Record> = (0..300)
            .map(|i| Record {
                id: format!("r{i}"),
                city: "X".into(),
                timestamp: 0,
                longitude: 0.0,
                latitude: 0.0,
                vector_index: i as u64,
            })
            .collect();
        let m = Manifest::new(records, "v", dim);
        for bin in 0..4 {
            let mut oracle: Vec<(f64, usize)> = (0..300)
                .filter(|&i| crate::assign(&cb, block.row(i)).unwrap() == bin)
                .map(|i| (crate::sq_distance(block.row(i), cb.centroid(bin)).unwrap(), i))
                .collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got = nearest_exemplars(&cb, bin, &m, &block, 10).unwrap();
            let want: Vec<String> = oracle.iter().take(10).map(|(_, i)| format!("r{i}")).collect();
            assert_eq!(got.record_ids, want);
        }
    }

    proptest! {
        #[test]
        fn partition_antisymmetry_and_monotonicity(seed in any::<u64>(), k in 1usize..40, th in 0.0f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cv(&normalised(&mut rng, k), "2");
            let b = cv(&normalised(&mut rng, k), "1");
            let f = compute_ftd(&a, &b, th).unwrap();
            prop_assert_eq!(f.plus.len() + f.minus.len() + f.zero.len(), k);
            prop_assert!(f.plus.values().chain(f.minus.values()).all(|&m| m > th));

            let r = compute_ftd(&b, &a, th).unwrap();
            prop_assert_eq!(&f.plus, &r.minus);
            prop_assert_eq!(&f.minus, &r.plus);

            let stricter = compute_ftd(&a, &b, th * 2.0 + 0.001).unwrap();
            prop_assert!(stricter.plus.keys().all(|b| f.plus.contains_key(b)));
            prop_assert!(stricter.minus.keys().all(|b| f.minus.contains_key(b)));

            let lhs: f64 = f.plus.values().sum::<f64>() - f.minus.values().sum::<f64>();
            let rhs: f64 = f.zero.iter().map(|&i| -(a.bins[i] - b.bins[i])).sum();
            prop_assert!((lhs - rhs).abs() < 1e-6);
        }
    }
}
