use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::VectorBlock;
use crate::error::{Error, Result};
use crate::features::sq_distance_unchecked;

pub const DEFAULT_K: usize = 1_000;
pub const DEFAULT_TRAIN_CAP: usize = 1_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent seedings; the run with the lowest inertia is kept.
    #[serde(default = "one")]
    pub n_init: usize,
}

fn one() -> usize {
    1
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
            n_init: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub seed: u64,
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares of the stored centroids.
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    /// Number of times an empty cluster was re-seeded.
    pub reseeds: usize,
    /// Which of the `n_init` seedings was kept.
    #[serde(default)]
    pub best_init: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centroids: Vec<f32>,
    pub fit_meta: FitMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookHeader {
    k: usize,
    dim: usize,
    fit_meta: FitMeta,
    matrix_file: PathBuf,
}

impl Codebook {
    /// Wraps externally supplied centroids. Fit metadata is zeroed.
    pub fn from_centroids(centroids: VectorBlock) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::InvalidParameter("codebook needs at least one centroid".into()));
        }
        centroids.check_finite()?;
        Ok(Self {
            k: centroids.count(),
            dim: centroids.dim(),
            centroids: centroids.into_vec(),
            fit_meta: FitMeta {
                seed: 0,
                n_train: 0,
                iterations: 0,
                converged: false,
                inertia: 0.0,
                inertia_history: Vec::new(),
                reseeds: 0,
                best_init: 0,
            },
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[f32]> {
        self.centroids.chunks_exact(self.dim)
    }

    pub fn to_block(&self) -> VectorBlock {
        VectorBlock::new(self.dim, self.centroids.clone()).expect("codebook shape is valid")
    }

    /// Nearest centroid and its squared distance; ties go to the lower index.
    pub fn nearest(&self, v: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids().enumerate() {
            let d = sq_distance_unchecked(v, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Assigns every row of `block` in parallel.
    pub fn assign_block(&self, block: &VectorBlock) -> Result<Vec<usize>> {
        self.check_dim(block.dim())?;
        Ok(block
            .as_slice()
            .par_chunks_exact(self.dim)
            .map(|row| self.nearest(row).0)
            .collect())
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            })
        }
    }

    pub fn save(&self, header_path: &Path, matrix_path: &Path) -> Result<()> {
        self.to_block().save(matrix_path)?;
        let header = CodebookHeader {
            k: self.k,
            dim: self.dim,
            fit_meta: self.fit_meta.clone(),
            matrix_file: matrix_path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| matrix_path.to_owned()),
        };
        std::fs::write(header_path, serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let header: CodebookHeader = serde_json::from_slice(&std::fs::read(header_path)?)?;
        let matrix_path = header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.matrix_file);
        let block = VectorBlock::load(&matrix_path)?;
        if block.count() != header.k || block.dim() != header.dim {
            return Err(Error::Format {
                path: header_path.to_owned(),
                message: format!(
                    "centroid matrix is {}x{}, header says {}x{}",
                    block.count(),
                    block.dim(),
                    header.k,
                    header.dim
                ),
            });
        }
        let mut codebook = Self::from_centroids(block)?;
        codebook.fit_meta = header.fit_meta;
        Ok(codebook)
    }
}

/// Index of the nearest centroid (lowest index on ties).
pub fn assign(codebook: &Codebook, v: &[f32]) -> Result<usize> {
    codebook.check_dim(v.len())?;
    Ok(codebook.nearest(v).0)
}

fn dist_mixed(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - y;
            d * d
        })
        .sum()
}

fn nearest_mixed(row: &[f32], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = dist_mixed(row, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding. Fails if fewer than `k` distinct points exist.
fn plus_plus_init(data: &VectorBlock, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = data.count();
    let dim = data.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend(data.row(first).iter().map(|&v| f64::from(v)));
    let mut closest: Vec<f64> = data
        .as_slice()
        .par_chunks_exact(dim)
        .map(|row| dist_mixed(row, &centroids[0..dim]))
        .collect();

    for chosen in 1..k {
        let total: f64 = closest.iter().sum();
        if !(total > 0.0) {
            return Err(Error::TooFewDistinct { distinct: chosen, k });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in closest.iter().enumerate() {
            if d > 0.0 {
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("total > 0 implies a positive weight");
        let start = centroids.len();
        centroids.extend(data.row(pick).iter().map(|&v| f64::from(v)));
        let newest = &centroids[start..];
        closest
            .par_iter_mut()
            .zip(data.as_slice().par_chunks_exact(dim))
            .for_each(|(c, row)| {
                let d = dist_mixed(row, newest);
                if d < *c {
                    *c = d;
                }
            });
    }
    Ok(centroids)
}

/// Mean of each cluster. A cluster left empty is moved onto the point
/// farthest from its own centroid (each point used at most once); returns
/// the new centroids and how many clusters were re-seeded.
fn update_centroids(
    data: &VectorBlock,
    assigned: &[(usize, f64)],
    centroids: &[f64],
    k: usize,
) -> (Vec<f64>, usize) {
    let dim = data.dim();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &(label, _)) in data.rows().zip(assigned) {
        counts[label] += 1;
        for (s, &v) in sums[label * dim..(label + 1) * dim].iter_mut().zip(row) {
            *s += f64::from(v);
        }
    }

    let mut updated = centroids.to_vec();
    let mut taken = vec![false; assigned.len()];
    let mut reseeded = 0;
    for j in 0..k {
        let slot = &mut updated[j * dim..(j + 1) * dim];
        if counts[j] > 0 {
            let c = counts[j] as f64;
            for (u, s) in slot.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *u = s / c;
            }
            continue;
        }
        let farthest = assigned
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .fold(None, |best: Option<(usize, f64)>, (i, &(_, d))| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        // if every point already sits on a centroid, moving would duplicate one
        if let Some((i, _)) = farthest.filter(|&(_, d)| d > 0.0) {
            taken[i] = true;
            for (u, &v) in slot.iter_mut().zip(data.row(i)) {
                *u = f64::from(v);
            }
            reseeded += 1;
        }
    }
    (updated, reseeded)
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// A cluster that ends an assignment step empty is moved onto the point
/// farthest from its own centroid. Reductions run in row order, so equal
/// inputs give bit-identical centroids.
pub fn fit_codebook(data: &VectorBlock, config: &KMeansConfig) -> Result<Codebook> {
    let n = data.count();
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::TooFewSamples { n, k });
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be >= 0, got {}", config.tol)));
    }
    if config.n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be at least 1".into()));
    }
    data.check_finite()?;

    let mut best: Option<Codebook> = None;
    for init in 0..config.n_init {
        let candidate = lloyd(data, config, init)?;
        if best.as_ref().is_none_or(|b| candidate.fit_meta.inertia < b.fit_meta.inertia) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// One seeding plus Lloyd iterations. Seeding `init` draws from stream
/// `init` of the configured seed.
fn lloyd(data: &VectorBlock, config: &KMeansConfig, init: usize) -> Result<Codebook> {
    let n = data.count();
    let k = config.k;
    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(init as u64);
    let mut centroids = plus_plus_init(data, k, &mut rng)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeds = 0;

    while iterations < config.max_iter {
        let assigned: Vec<(usize, f64)> = data
            .as_slice()
            .par_chunks_exact(dim)
            .map(|row| nearest_mixed(row, &centroids, dim))
            .collect();
        history.push(assigned.iter().map(|a| a.1).sum());

        let (updated, reseeded) = update_centroids(data, &assigned, &centroids, k);
        reseeds += reseeded;

        let shift = centroids
            .chunks_exact(dim)
            .zip(updated.chunks_exact(dim))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .fold(0.0f64, f64::max)
            .sqrt();
        centroids = updated;
        iterations += 1;
        if reseeded == 0 && (shift < config.tol || shift == 0.0) {
            converged = true;
            break;
        }
    }

    let stored: Vec<f32> = centroids.iter().map(|&v| v as f32).collect();
    let mut codebook = Codebook {
        k,
        dim,
        centroids: stored,
        fit_meta: FitMeta {
            seed: config.seed,
            n_train: n,
            iterations,
            converged,
            inertia: 0.0,
            inertia_history: history,
            reseeds,
            best_init: init,
        },
    };
    codebook.fit_meta.inertia = data
        .as_slice()
        .par_chunks_exact(dim)
        .map(|row| codebook.nearest(row).1)
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(codebook)
}
