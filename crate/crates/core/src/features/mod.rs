//! Descriptor-space algebra: distances, PCA compression and segment fusion.

mod distance;
mod fuse;
mod pca;

pub use distance::{sq_distance, sq_distance_unchecked};
pub use fuse::{concat, FittedFusion, FusedVector, FusionPlan, Segment, SegmentPlan};
pub use pca::{fit_pca, project, PcaModel};
