use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codebook::CodewordVector;
use crate::error::{Error, Result};

pub const DEFAULT_GRAPH_THRESHOLD: f64 = 0.2;
/// DOT pen width for an edge of weight 1.
pub const PENWIDTH_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    Cosine,
    HistogramIntersection,
}

impl SimilarityMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityMeasure::Cosine => "cosine",
            SimilarityMeasure::HistogramIntersection => "histogram_intersection",
        }
    }
}

/// Similarity in [0, 1] of two codeword vectors. Identical inputs score
/// exactly 1.
pub fn similarity(a: &CodewordVector, b: &CodewordVector, measure: SimilarityMeasure) -> Result<f64> {
    if a.k() != b.k() {
        return Err(Error::Incompatible(format!("k {} vs {}", a.k(), b.k())));
    }
    for v in [a, b] {
        if v.support == 0 || !(v.mass() > 0.0) {
            return Err(Error::ZeroSupport(v.city.clone()));
        }
    }
    if a.bins == b.bins {
        return Ok(1.0);
    }
    let score = match measure {
        SimilarityMeasure::Cosine => {
            let dot: f64 = a.bins.iter().zip(&b.bins).map(|(x, y)| x * y).sum();
            let na: f64 = a.bins.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.bins.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        }
        SimilarityMeasure::HistogramIntersection => {
            a.bins.iter().zip(&b.bins).map(|(x, y)| x.min(*y)).sum()
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

/// Undirected city graph keeping pairs at or above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub threshold: f64,
    pub measure: SimilarityMeasure,
}

pub fn build_similarity_graph(
    city_vectors: &BTreeMap<String, CodewordVector>,
    threshold: f64,
    measure: SimilarityMeasure,
) -> Result<SimilarityGraph> {
    if city_vectors.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "similarity graph needs at least two cities, got {}",
            city_vectors.len()
        )));
    }
    if threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let entries: Vec<(&String, &CodewordVector)> = city_vectors.iter().collect();
    let mut edges = Vec::new();
    for (i, (a, va)) in entries.iter().enumerate() {
        for (b, vb) in &entries[i + 1..] {
            let weight = similarity(va, vb, measure)?;
            if weight >= threshold {
                edges.push(Edge {
                    a: (*a).clone(),
                    b: (*b).clone(),
                    weight,
                });
            }
        }
    }
    Ok(SimilarityGraph {
        nodes: entries.iter().map(|(c, _)| (*c).clone()).collect(),
        edges,
        threshold,
        measure,
    })
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl SimilarityGraph {
    /// Graphviz source; pen width is proportional to edge weight.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("graph city_similarity {\n");
        let _ = writeln!(
            out,
            "  graph [label={}, threshold=\"{}\"];",
            dot_id(&format!("{} >= {}", self.measure.name(), self.threshold)),
            self.threshold
        );
        out.push_str("  node [shape=ellipse];\n");
        for node in &self.nodes {
            let _ = writeln!(out, "  {};", dot_id(node));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -- {} [weight=\"{}\", penwidth=\"{:.4}\", label=\"{:.3}\"];",
                dot_id(&e.a),
                dot_id(&e.b),
                e.weight,
                e.weight * PENWIDTH_SCALE,
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}
