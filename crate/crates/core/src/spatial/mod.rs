//! City-level analyses: which city a codeword vector came from, and how
//! similar cities are to one another.

mod classify;
mod labeled;
mod similarity;
mod svm;

pub use classify::{evaluate, train_classifier, ClassifierKind, ClassifierModel, ConfusionMatrix, SvmParams};
pub use labeled::{make_labeled_sets, LabeledCodewordSet, SplitParams};
pub use similarity::{
    build_similarity_graph, similarity, Edge, SimilarityGraph, SimilarityMeasure, DEFAULT_GRAPH_THRESHOLD,
    PENWIDTH_SCALE,
};
pub use svm::{BinarySvm, SmoConfig};
