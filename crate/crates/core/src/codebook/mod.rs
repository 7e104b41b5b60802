//! k-means dictionaries and bag-of-words codeword histograms.

mod histogram;
mod kmeans;

pub use histogram::{build_codeword_vector, CodewordVector, Normalization};
pub(crate) use histogram::csv_field;
pub use kmeans::{assign, fit_codebook, Codebook, FitMeta, KMeansConfig, DEFAULT_K, DEFAULT_TRAIN_CAP};

#[cfg(test)]
mod tests;
