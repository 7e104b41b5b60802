use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labeled::LabeledCodewordSet;
use super::svm::{BinarySvm, SmoConfig};
use crate::codebook::csv_field;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NearestClassMean,
    RbfSvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` means `1 / k`.
    pub gamma: Option<f64>,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 0.01,
            gamma: None,
            eps: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Inner {
    NearestClassMean {
        means: Vec<Vec<f64>>,
    },
    RbfSvm {
        gamma: f64,
        support: Vec<Vec<f64>>,
        machines: Vec<BinarySvm>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub classes: Vec<String>,
    pub k: usize,
    inner: Inner,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Fits one model over all classes present in `train`.
///
/// Nearest-class-mean stores each class's mean histogram. The RBF SVM trains
/// one-vs-rest machines and predicts the class with the largest decision
/// value.
pub fn train_classifier(train: &LabeledCodewordSet, kind: ClassifierKind, params: &SvmParams) -> Result<ClassifierModel> {
    if train.vectors.len() != train.labels.len() {
        return Err(Error::InvalidParameter("vectors and labels differ in length".into()));
    }
    let classes = train.classes();
    if classes.is_empty() {
        return Err(Error::InvalidParameter("training set has no vectors".into()));
    }
    let k = train.vectors[0].k();
    if let Some(bad) = train.vectors.iter().find(|v| v.k() != k) {
        return Err(Error::Incompatible(format!("k {} vs {}", bad.k(), k)));
    }
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let targets: Vec<usize> = train.labels.iter().map(|l| index[l.as_str()]).collect();

    let inner = match kind {
        ClassifierKind::NearestClassMean => {
            let mut means = vec![vec![0.0f64; k]; classes.len()];
            let mut counts = vec![0usize; classes.len()];
            for (v, &t) in train.vectors.iter().zip(&targets) {
                counts[t] += 1;
                for (m, b) in means[t].iter_mut().zip(&v.bins) {
                    *m += b;
                }
            }
            for (m, &c) in means.iter_mut().zip(&counts) {
                m.iter_mut().for_each(|x| *x /= c as f64);
            }
            Inner::NearestClassMean { means }
        }
        ClassifierKind::RbfSvm => {
            if !(params.c > 0.0) {
                return Err(Error::InvalidParameter(format!("C must be positive, got {}", params.c)));
            }
            let gamma = params.gamma.unwrap_or(1.0 / k as f64);
            if !(gamma > 0.0) {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
            }
            let support: Vec<Vec<f64>> = train.vectors.iter().map(|v| v.bins.clone()).collect();
            let n = support.len();
            let gram: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|ij| rbf(&support[ij / n], &support[ij % n], gamma))
                .collect();
            let config = SmoConfig {
                c: params.c,
                eps: params.eps,
                max_iter: params.max_iter,
            };
            let machines = (0..classes.len())
                .into_par_iter()
                .map(|class| {
                    let y: Vec<f64> = targets.iter().map(|&t| if t == class { 1.0 } else { -1.0 }).collect();
                    BinarySvm::train(&gram, &y, &config)
                })
                .collect();
            Inner::RbfSvm { gamma, support, machines }
        }
    };
    Ok(ClassifierModel { kind, classes, k, inner })
}

impl ClassifierModel {
    /// Index into `classes`; ties go to the lower index.
    pub fn predict_index(&self, bins: &[f64]) -> Result<usize> {
        if bins.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: bins.len(),
            });
        }
        let best = match &self.inner {
            Inner::NearestClassMean { means } => means
                .iter()
                .map(|m| sq_dist(bins, m))
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best }),
            Inner::RbfSvm { gamma, support, machines } => {
                let row: Vec<f64> = support.iter().map(|s| rbf(s, bins, *gamma)).collect();
                machines
                    .iter()
                    .map(|m| m.decision(&row))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best })
            }
        };
        Ok(best.0)
    }

    pub fn predict(&self, bins: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(bins)?])
    }

    /// Whether every one-vs-rest machine reached the KKT tolerance.
    pub fn converged(&self) -> bool {
        match &self.inner {
            Inner::NearestClassMean { .. } => true,
            Inner::RbfSvm { machines, .. } => machines.iter().all(|m| m.converged),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match &self.inner {
            Inner::RbfSvm { gamma, .. } => Some(*gamma),
            Inner::NearestClassMean { .. } => None,
        }
    }
}

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.trace() as f64 / total as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// First column holds the actual class, the header lists predicted classes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(&csv_field(c));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate(model: &ClassifierModel, test: &LabeledCodewordSet) -> Result<ConfusionMatrix> {
    let index: HashMap<&str, usize> = model.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let actual: Vec<usize> = test
        .labels
        .iter()
        .map(|l| index.get(l.as_str()).copied().ok_or_else(|| Error::UnseenLabel(l.clone())))
        .collect::<Result<_>>()?;
    let predicted: Vec<usize> = test
        .vectors
        .par_iter()
        .map(|v| model.predict_index(&v.bins))
        .collect::<Result<_>>()?;
    let n = model.classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (a, p) in actual.into_iter().zip(predicted) {
        counts[a][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: model.classes.clone(),
        counts,
    })
}
