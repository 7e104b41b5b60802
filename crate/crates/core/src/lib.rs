//! Spatio-temporal trend analysis over geo-tagged descriptor corpora.
//!
//! The pipeline: filter records around city anchors ([`corpus`]), optionally
//! compress and fuse descriptor segments ([`features`]), learn a k-means
//! dictionary and build per-population codeword histograms ([`codebook`]),
//! then compare histograms across consecutive periods ([`trend`]) or across
//! cities ([`spatial`]). [`synth`] generates corpora with known ground truth.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codebook;
pub mod corpus;
pub mod error;
pub mod features;
pub mod spatial;
pub mod synth;
pub mod trend;

pub use codebook::{assign, build_codeword_vector, fit_codebook, Codebook, CodewordVector, KMeansConfig};
pub use corpus::{CityAnchor, GeoPoint, Manifest, Record, VectorBlock, YearRange};
pub use error::{Error, Result};
pub use features::{fit_pca, project, sq_distance, PcaModel};
