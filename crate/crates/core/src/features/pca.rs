use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::VectorBlock;
use crate::error::{Error, Result};

const ROWS_PER_CHUNK: usize = 1024;

/// Centering mean plus an orthonormal projection basis (rows are the
/// principal axes, strongest first).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    /// `output_dim x input_dim`, row-major.
    pub basis: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub seed: u64,
    pub n_train: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaHeader {
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    n_train: usize,
    explained_variance: Vec<f64>,
    /// Row 0 is the mean, rows 1.. are the basis.
    matrix_file: PathBuf,
}

/// Fits PCA by eigendecomposition of the sample covariance (divisor `n - 1`).
///
/// Each axis is signed so that its first non-negligible coordinate is
/// positive. `seed` is recorded in the model; the fit itself is deterministic.
pub fn fit_pca(data: &VectorBlock, output_dim: usize, seed: u64) -> Result<PcaModel> {
    let n = data.count();
    let d = data.dim();
    if n < 2 {
        return Err(Error::TooFewSamples { n, k: 2 });
    }
    if output_dim == 0 || output_dim > d.min(n - 1) {
        return Err(Error::InvalidParameter(format!(
            "output_dim must be in 1..={} for {n} samples of dim {d}, got {output_dim}",
            d.min(n - 1)
        )));
    }

    let mean = column_mean(data);
    let cov = covariance(data, &mean);
    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eigen.eigenvalues[order[0]].max(0.0);
    let cutoff = top * 1e-10;
    let rank = order
        .iter()
        .filter(|&&i| top > 0.0 && eigen.eigenvalues[i] > cutoff)
        .count();
    if output_dim > rank {
        return Err(Error::RankDeficient {
            requested: output_dim,
            rank,
        });
    }

    let mut basis = Vec::with_capacity(output_dim * d);
    let mut explained_variance = Vec::with_capacity(output_dim);
    for &col in order.iter().take(output_dim) {
        let axis = eigen.eigenvectors.column(col);
        let norm = axis.norm();
        let pivot = axis
            .iter()
            .copied()
            .find(|v| v.abs() > 1e-12 * norm)
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.extend(axis.iter().map(|v| sign * v / norm));
        explained_variance.push(eigen.eigenvalues[col].max(0.0));
    }

    Ok(PcaModel {
        input_dim: d,
        output_dim,
        mean,
        basis,
        explained_variance,
        seed,
        n_train: n,
    })
}

fn column_mean(data: &VectorBlock) -> Vec<f64> {
    let d = data.dim();
    let mut sum = vec![0.0f64; d];
    for row in data.rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += f64::from(v);
        }
    }
    let n = data.count() as f64;
    sum.into_iter().map(|s| s / n).collect()
}

/// Upper-triangle accumulation per fixed-size chunk, then an in-order merge
/// so the result does not depend on thread scheduling.
fn covariance(data: &VectorBlock, mean: &[f64]) -> Vec<f64> {
    let d = data.dim();
    let partials: Vec<Vec<f64>> = data
        .as_slice()
        .par_chunks(ROWS_PER_CHUNK * d)
        .map(|chunk| {
            let mut acc = vec![0.0f64; d * d];
            let mut centered = vec![0.0f64; d];
            for row in chunk.chunks_exact(d) {
                for ((c, &v), m) in centered.iter_mut().zip(row).zip(mean) {
                    *c = f64::from(v) - m;
                }
                for i in 0..d {
                    let ci = centered[i];
                    let out = &mut acc[i * d..(i + 1) * d];
                    for j in i..d {
                        out[j] += ci * centered[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = vec![0.0f64; d * d];
    for partial in partials {
        for (c, p) in cov.iter_mut().zip(partial) {
            *c += p;
        }
    }
    let denom = (data.count() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

/// `basis * (v - mean)`.
pub fn project(model: &PcaModel, v: &[f32]) -> Result<Vec<f64>> {
    if v.len() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            found: v.len(),
        });
    }
    let centered: Vec<f64> = v
        .iter()
        .zip(&model.mean)
        .map(|(&x, m)| f64::from(x) - m)
        .collect();
    Ok(model
        .basis
        .chunks_exact(model.input_dim)
        .map(|axis| axis.iter().zip(&centered).map(|(a, c)| a * c).sum())
        .collect())
}

impl PcaModel {
    pub fn axis(&self, i: usize) -> &[f64] {
        &self.basis[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// `mean + basis^T * y`.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim,
                found: y.len(),
            });
        }
        let mut out = self.mean.clone();
        for (axis, &coef) in self.basis.chunks_exact(self.input_dim).zip(y) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += coef * a;
            }
        }
        Ok(out)
    }

    pub fn project_block(&self, block: &VectorBlock) -> Result<VectorBlock> {
        let rows: Vec<Vec<f32>> = block
            .rows()
            .map(|row| project(self, row).map(|y| y.into_iter().map(|v| v as f32).collect()))
            .collect::<Result<_>>()?;
        VectorBlock::from_rows(self.output_dim, &rows)
    }

    /// Writes the JSON header to `header_path` and the mean and basis, as
    /// `f32` rows, to `matrix_path`.
    pub fn save(&self, header_path: &Path, matrix_path: &Path) -> Result<()> {
        let mut data = Vec::with_capacity((self.output_dim + 1) * self.input_dim);
        data.extend(self.mean.iter().map(|&v| v as f32));
        data.extend(self.basis.iter().map(|&v| v as f32));
        VectorBlock::new(self.input_dim, data)?.save(matrix_path)?;
        let header = PcaHeader {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            seed: self.seed,
            n_train: self.n_train,
            explained_variance: self.explained_variance.clone(),
            matrix_file: matrix_path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| matrix_path.to_owned()),
        };
        std::fs::write(header_path, serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let header: PcaHeader = serde_json::from_slice(&std::fs::read(header_path)?)?;
        let matrix_path = header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.matrix_file);
        let block = VectorBlock::load(&matrix_path)?;
        let format_err = |message: String| Error::Format {
            path: header_path.to_owned(),
            message,
        };
        if block.dim() != header.input_dim || block.count() != header.output_dim + 1 {
            return Err(format_err(format!(
                "matrix is {}x{}, header expects {}x{}",
                block.count(),
                block.dim(),
                header.output_dim + 1,
                header.input_dim
            )));
        }
        if header.explained_variance.len() != header.output_dim {
            return Err(format_err("explained_variance length mismatch".into()));
        }
        let values: Vec<f64> = block.as_slice().iter().map(|&v| f64::from(v)).collect();
        let (mean, basis) = values.split_at(header.input_dim);
        Ok(Self {
            input_dim: header.input_dim,
            output_dim: header.output_dim,
            mean: mean.to_vec(),
            basis: basis.to_vec(),
            explained_variance: header.explained_variance,
            seed: header.seed,
            n_train: header.n_train,
        })
    }
}
