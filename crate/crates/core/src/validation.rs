//! Hypothesis validation against the whole scene (overlap rate) or against
//! the correspondences alone (inlier count).

use rayon::prelude::*;

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::neighbor::NeighborIndex;
use crate::pose::correspondence_residual;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationVerdict {
    pub accepted: bool,
    pub overlap: f64,
    pub inlier_count: usize,
}

/// Fraction of transformed source points lying within `d_op_th` of the target cloud.
pub fn overlap_rate(t: &RigidTransform, source: &PointCloud, target_index: &NeighborIndex, d_op_th: f64) -> Result<f64> {
    if !(d_op_th > 0.0) {
        return Err(Error::InvalidInput(format!("d_op_th must be positive, got {d_op_th}")));
    }
    let overlapped = source
        .points()
        .par_iter()
        .filter(|p| target_index.nearest_distance(&t.apply_point(p)) <= d_op_th)
        .count();
    Ok(overlapped as f64 / source.len() as f64)
}

pub fn validate_global(overlap: f64, t_overlap: f64) -> bool {
    overlap > t_overlap
}

/// Counts correspondences with residual below `t_he`; accepts when the count exceeds `t_inliers`.
pub fn validate_local(t: &RigidTransform, corrs: &CorrespondenceSet, t_he: f64, t_inliers: usize) -> ValidationVerdict {
    let inlier_count = corrs.iter().filter(|c| correspondence_residual(t, c) < t_he).count();
    ValidationVerdict { accepted: inlier_count > t_inliers, overlap: 0.0, inlier_count }
}
