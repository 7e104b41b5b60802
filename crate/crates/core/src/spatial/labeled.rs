use std::collections::BTreeMap;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodewordVector};
use crate::corpus::{Manifest, VectorBlock};
use crate::error::{Error, Result};

/// Codeword vectors with their city labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCodewordSet {
    pub vectors: Vec<CodewordVector>,
    pub labels: Vec<String>,
    pub per_vector_sample_size: usize,
}

impl LabeledCodewordSet {
    pub fn new(vectors: Vec<CodewordVector>, labels: Vec<String>, per_vector_sample_size: usize) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        Ok(Self {
            vectors,
            labels,
            per_vector_sample_size,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Distinct labels, sorted.
    pub fn classes(&self) -> Vec<String> {
        let mut classes = self.labels.clone();
        classes.sort();
        classes.dedup();
        classes
    }

    /// Mean codeword vector of every class.
    pub fn class_means(&self) -> Result<BTreeMap<String, CodewordVector>> {
        let mut grouped: BTreeMap<String, Vec<CodewordVector>> = BTreeMap::new();
        for (v, l) in self.vectors.iter().zip(&self.labels) {
            grouped.entry(l.clone()).or_default().push(v.clone());
        }
        grouped
            .into_iter()
            .map(|(city, vs)| {
                let mean = CodewordVector::mean_of(&vs, city.clone(), "mean")?;
                Ok((city, mean))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitParams {
    pub train_n: usize,
    pub test_n: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            train_n: 500,
            test_n: 100,
            sample_size: 10_000,
            seed: 0,
        }
    }
}

/// Shuffled record positions split into (test pool, train pool). Caller has
/// checked that `len` covers both minimum pool sizes.
fn split_pools(len: usize, params: &SplitParams, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let need_train = if params.train_n > 0 { params.sample_size } else { 0 };
    let need_test = if params.test_n > 0 { params.sample_size } else { 0 };
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let share = params.test_n as f64 / (params.train_n + params.test_n) as f64;
    let test_len = ((len as f64 * share).round() as usize).clamp(need_test, len - need_train);
    let train = order.split_off(test_len);
    (order, train)
}

/// Splits each city's records into disjoint train and test pools, then
/// builds `train_n` (resp. `test_n`) codeword vectors per city, each from an
/// independent uniform sample of `sample_size` records of its pool.
///
/// The test pool takes a share of the records proportional to
/// `test_n / (train_n + test_n)`, bounded so both pools hold at least
/// `sample_size` records.
pub fn make_labeled_sets(
    per_city: &BTreeMap<String, Manifest>,
    codebook: &Codebook,
    block: &VectorBlock,
    params: &SplitParams,
) -> Result<(LabeledCodewordSet, LabeledCodewordSet)> {
    let SplitParams {
        train_n,
        test_n,
        sample_size,
        seed,
    } = *params;
    if sample_size == 0 {
        return Err(Error::InvalidParameter("sample_size must be positive".into()));
    }
    if train_n + test_n == 0 {
        return Err(Error::InvalidParameter("train_n + test_n must be positive".into()));
    }
    codebook.check_dim(block.dim())?;

    let need_train = if train_n > 0 { sample_size } else { 0 };
    let need_test = if test_n > 0 { sample_size } else { 0 };
    let mut train = LabeledCodewordSet::new(Vec::new(), Vec::new(), sample_size)?;
    let mut test = LabeledCodewordSet::new(Vec::new(), Vec::new(), sample_size)?;

    for (stream, (city, manifest)) in per_city.iter().enumerate() {
        let available = manifest.len();
        if available < need_train + need_test {
            return Err(Error::InsufficientRecords {
                city: city.clone(),
                available,
                required: need_train + need_test,
            });
        }
        let mut bins = Vec::with_capacity(available);
        for record in &manifest.records {
            let row = block.get(record.row()).ok_or_else(|| Error::VectorIndexOutOfRange {
                id: record.id.clone(),
                index: record.vector_index,
                count: block.count() as u64,
            })?;
            bins.push(codebook.nearest(row).0);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let (test_idx, train_idx) = split_pools(available, params, &mut rng);
        let train_pool: Vec<usize> = train_idx.iter().map(|&i| bins[i]).collect();
        let test_pool: Vec<usize> = test_idx.iter().map(|&i| bins[i]).collect();

        for (pool, n, set, tag) in [
            (&train_pool, train_n, &mut train, "train"),
            (&test_pool, test_n, &mut test, "test"),
        ] {
            for _ in 0..n {
                let picked = index::sample(&mut rng, pool.len(), sample_size);
                let v = CodewordVector::from_assignments(
                    codebook.k(),
                    picked.iter().map(|i| pool[i]),
                    city.clone(),
                    tag,
                )?;
                set.vectors.push(v);
                set.labels.push(city.clone());
            }
        }
    }
    Ok((train, test))
}
