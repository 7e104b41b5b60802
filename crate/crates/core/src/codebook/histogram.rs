use serde::{Deserialize, Serialize};

use super::kmeans::Codebook;
use crate::corpus::{Manifest, VectorBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    L1,
}

/// L1-normalised histogram of codeword assignments for one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodewordVector {
    pub bins: Vec<f64>,
    pub normalization: Normalization,
    pub support: usize,
    pub city: String,
    pub period: String,
}

impl CodewordVector {
    pub fn from_counts(counts: &[u64], city: impl Into<String>, period: impl Into<String>) -> Self {
        let support: u64 = counts.iter().sum();
        let bins = if support == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / support as f64).collect()
        };
        Self {
            bins,
            normalization: Normalization::L1,
            support: support as usize,
            city: city.into(),
            period: period.into(),
        }
    }

    /// Histogram of pre-computed bin assignments.
    pub fn from_assignments<I>(k: usize, assignments: I, city: impl Into<String>, period: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut counts = vec![0u64; k];
        for bin in assignments {
            let slot = counts.get_mut(bin).ok_or_else(|| {
                Error::InvalidParameter(format!("bin {bin} out of range for k = {k}"))
            })?;
            *slot += 1;
        }
        Ok(Self::from_counts(&counts, city, period))
    }

    /// Average of several codeword vectors; support is summed.
    pub fn mean_of(vectors: &[CodewordVector], city: impl Into<String>, period: impl Into<String>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot average zero codeword vectors".into()))?;
        let k = first.k();
        let mut bins = vec![0.0f64; k];
        for v in vectors {
            if v.k() != k {
                return Err(Error::Incompatible(format!("k {} vs {}", v.k(), k)));
            }
            for (b, x) in bins.iter_mut().zip(&v.bins) {
                *b += x;
            }
        }
        let n = vectors.len() as f64;
        bins.iter_mut().for_each(|b| *b /= n);
        Ok(Self {
            bins,
            normalization: Normalization::L1,
            support: vectors.iter().map(|v| v.support).sum(),
            city: city.into(),
            period: period.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.bins.len()
    }

    pub fn mass(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// `city,period,support,bin_0,...,bin_{k-1}`.
    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},{}", csv_field(&self.city), csv_field(&self.period), self.support);
        for b in &self.bins {
            row.push(',');
            row.push_str(&b.to_string());
        }
        row
    }

    pub fn csv_header(k: usize) -> String {
        let mut header = String::from("city,period,support");
        for i in 0..k {
            header.push_str(&format!(",bin_{i}"));
        }
        header
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Histogram of nearest-centroid assignments over the manifest's records.
pub fn build_codeword_vector(
    codebook: &Codebook,
    manifest: &Manifest,
    block: &VectorBlock,
    city: &str,
    period: &str,
) -> Result<CodewordVector> {
    codebook.check_dim(block.dim())?;
    let mut counts = vec![0u64; codebook.k()];
    for record in &manifest.records {
        let row = block.get(record.row()).ok_or_else(|| Error::VectorIndexOutOfRange {
            id: record.id.clone(),
            index: record.vector_index,
            count: block.count() as u64,
        })?;
        counts[codebook.nearest(row).0] += 1;
    }
    Ok(CodewordVector::from_counts(&counts, city, period))
}
