use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::pca::{fit_pca, project, PcaModel};
use crate::corpus::{sample_indices, VectorBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub range: Range<usize>,
}

/// A concatenation of named descriptor segments.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub layout: Vec<Segment>,
    pub data: Vec<f32>,
}

impl FusedVector {
    pub fn segment(&self, name: &str) -> Option<&[f32]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.range.clone()])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Concatenates segments in order, recording where each one landed.
pub fn concat(segments: &[(&str, &[f32])]) -> Result<FusedVector> {
    let mut seen = HashSet::new();
    let mut layout = Vec::with_capacity(segments.len());
    let mut data = Vec::with_capacity(segments.iter().map(|(_, v)| v.len()).sum());
    for &(name, values) in segments {
        if !seen.insert(name) {
            return Err(Error::DuplicateSegment(name.to_owned()));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter(format!("segment {name:?} is empty")));
        }
        let start = data.len();
        data.extend_from_slice(values);
        layout.push(Segment {
            name: name.to_owned(),
            range: start..data.len(),
        });
    }
    Ok(FusedVector { layout, data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub name: String,
    /// Width of this segment in the raw vectors.
    pub len: usize,
    /// Compress this segment to this many dimensions before concatenation.
    #[serde(default)]
    pub pca_dim: Option<usize>,
    #[serde(default = "unit_scale")]
    pub scale: f32,
}

fn unit_scale() -> f32 {
    1.0
}

/// How raw vectors are split into segments, optionally compressed, and
/// re-concatenated. Segments appear in the raw vector in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub segments: Vec<SegmentPlan>,
}

impl FusionPlan {
    pub fn raw_dim(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn fused_dim(&self) -> usize {
        self.segments
            .iter()
            .map(|s| s.pca_dim.unwrap_or(s.len))
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.segments {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::DuplicateSegment(s.name.clone()));
            }
            if s.len == 0 || !s.scale.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "segment {:?} needs positive length and finite scale",
                    s.name
                )));
            }
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("fusion plan has no segments".into()));
        }
        Ok(())
    }
}

/// A fusion plan with its per-segment PCA models fitted.
#[derive(Debug, Clone)]
pub struct FittedFusion {
    pub plan: FusionPlan,
    pub models: BTreeMap<String, PcaModel>,
}

impl FittedFusion {
    /// Fits PCA for each segment that asks for it, on up to `sample_cap`
    /// rows drawn with `seed`.
    pub fn fit(plan: FusionPlan, block: &VectorBlock, sample_cap: usize, seed: u64) -> Result<Self> {
        plan.validate()?;
        if block.dim() != plan.raw_dim() {
            return Err(Error::DimensionMismatch {
                expected: plan.raw_dim(),
                found: block.dim(),
            });
        }
        let mut picked = sample_indices(block.count(), sample_cap, seed);
        picked.sort_unstable();
        let sample = block.select(&picked);
        let mut models = BTreeMap::new();
        let mut offset = 0;
        for seg in &plan.segments {
            if let Some(out) = seg.pca_dim {
                let rows: Vec<&[f32]> = sample
                    .rows()
                    .map(|r| &r[offset..offset + seg.len])
                    .collect();
                let part = VectorBlock::from_rows(seg.len, &rows)?;
                models.insert(seg.name.clone(), fit_pca(&part, out, seed)?);
            }
            offset += seg.len;
        }
        Ok(Self { plan, models })
    }

    pub fn transform_row(&self, row: &[f32]) -> Result<FusedVector> {
        if row.len() != self.plan.raw_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.plan.raw_dim(),
                found: row.len(),
            });
        }
        let mut parts: Vec<(&str, Vec<f32>)> = Vec::with_capacity(self.plan.segments.len());
        let mut offset = 0;
        for seg in &self.plan.segments {
            let raw = &row[offset..offset + seg.len];
            offset += seg.len;
            let mut values: Vec<f32> = match self.models.get(&seg.name) {
                Some(model) => project(model, raw)?.into_iter().map(|v| v as f32).collect(),
                None => raw.to_vec(),
            };
            if seg.scale != 1.0 {
                values.iter_mut().for_each(|v| *v *= seg.scale);
            }
            parts.push((seg.name.as_str(), values));
        }
        let borrowed: Vec<(&str, &[f32])> = parts.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        concat(&borrowed)
    }

    pub fn transform(&self, block: &VectorBlock) -> Result<VectorBlock> {
        let mut out = VectorBlock::empty(self.plan.fused_dim())?;
        for row in block.rows() {
            out.push(&self.transform_row(row)?.data)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn concat_records_layout() {
        let f = concat(&[("a", &[1.0, 2.0]), ("b", &[3.0])]).unwrap();
        assert_eq!(f.data, [1.0, 2.0, 3.0]);
        assert_eq!(f.layout[0].range, 0..2);
        assert_eq!(f.layout[1].range, 2..3);
        assert_eq!(concat(&[("only", &[4.0, 5.0])]).unwrap().data, [4.0, 5.0]);
        assert!(matches!(
            concat(&[("a", &[1.0]), ("a", &[2.0])]),
            Err(Error::DuplicateSegment(_))
        ));
        assert!(concat(&[("a", &[])]).is_err());
    }

    #[test]
    fn style_plus_color_is_256_wide() {
        let style = vec![0.5f32; 128];
        let color = vec![-0.25f32; 128];
        let f = concat(&[("style", &style), ("color", &color)]).unwrap();
        assert_eq!(f.len(), 256);
        assert_eq!(f.segment("color").unwrap(), color.as_slice());
    }

    #[test]
    fn plan_compresses_only_requested_segments() {
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|i| {
                let x = i as f32;
                vec![x, -x, x * 0.5, x * x * 0.01, (x * 0.3).sin()]
            })
            .collect();
        let block = VectorBlock::from_rows(5, &rows).unwrap();
        let plan = FusionPlan {
            segments: vec![
                SegmentPlan { name: "style".into(), len: 2, pca_dim: None, scale: 2.0 },
                SegmentPlan { name: "color".into(), len: 3, pca_dim: Some(2), scale: 1.0 },
            ],
        };
        let fitted = FittedFusion::fit(plan, &block, 100, 1).unwrap();
        let out = fitted.transform(&block).unwrap();
        assert_eq!(out.dim(), 4);
        assert_eq!(out.row(3)[..2], [6.0, -6.0]);
        assert!(fitted.models.contains_key("color") && !fitted.models.contains_key("style"));
    }

    proptest! {
        #[test]
        fn slicing_by_layout_recovers_segments(
            segs in proptest::collection::vec(proptest::collection::vec(-1e6f32..1e6, 1..6), 1..5)
        ) {
            let names: Vec<String> = (0..segs.len()).map(|i| format!("s{i}")).collect();
            let input: Vec<(&str, &[f32])> = names.iter().map(String::as_str).zip(segs.iter().map(Vec::as_slice)).collect();
            let fused = concat(&input).unwrap();
            prop_assert_eq!(fused.len(), segs.iter().map(Vec::len).sum::<usize>());
            for (name, seg) in &input {
                let got = fused.segment(name).unwrap();
                prop_assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), seg.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
        }
    }
}
