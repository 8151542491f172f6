//! Hit-based detection metrics: mean hit recall, precision and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_error_deg, translation_error, RigidTransform};

/// A prediction hits a ground-truth pose when both errors are within bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitCriteria {
    /// Degrees.
    pub rre_max: f64,
    /// Multiples of the model resolution.
    pub rte_max: f64,
}

impl Default for HitCriteria {
    fn default() -> Self {
        Self { rre_max: 15.0, rte_max: 10.0 }
    }
}

/// Counts for one scene pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub hits: usize,
    pub gt_count: usize,
    pub pred_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mhr: f64,
    pub mhp: f64,
    pub mhf1: f64,
    pub per_pair: Vec<PairCounts>,
    pub mean_time: f64,
}

/// Greedy one-to-one assignment. Candidate `(pred, gt)` pairs within the
/// criteria are taken in ascending rotation error (then pred, then gt index)
/// while both sides are still free. `resolution` converts `rte_max` to scene units.
pub fn match_hits(preds: &[RigidTransform], gts: &[RigidTransform], crit: &HitCriteria, resolution: f64) -> Vec<(usize, usize)> {
    let rte_abs = crit.rte_max * resolution;
    let mut candidates = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let rre = rotation_error_deg(p.rotation(), g.rotation());
            let rte = translation_error(p.translation(), g.translation());
            if rre <= crit.rre_max && rte <= rte_abs {
                candidates.push((rre, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut hits = Vec::new();
    for (_, i, j) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            hits.push((i, j));
        }
    }
    hits
}

pub fn pair_counts(preds: &[RigidTransform], gts: &[RigidTransform], crit: &HitCriteria, resolution: f64) -> PairCounts {
    PairCounts { hits: match_hits(preds, gts, crit, resolution).len(), gt_count: gts.len(), pred_count: preds.len() }
}

/// Per-pair recall, precision and F1, averaged over pairs. `mean_time` is
/// left at zero; callers that track timing fill it in.
pub fn compute_metrics(per_pair: &[PairCounts]) -> Result<MetricsReport> {
    let mut sums = (0.0, 0.0, 0.0);
    for (i, p) in per_pair.iter().enumerate() {
        if p.gt_count == 0 {
            return Err(Error::InvalidInput(format!("pair {i} has no ground-truth instances")));
        }
        if p.hits > p.gt_count.min(p.pred_count) {
            return Err(Error::InvalidInput(format!("pair {i} has more hits than instances")));
        }
        let hr = p.hits as f64 / p.gt_count as f64;
        let hp = if p.pred_count == 0 { 0.0 } else { p.hits as f64 / p.pred_count as f64 };
        let f1 = if hr + hp == 0.0 { 0.0 } else { 2.0 * hr * hp / (hr + hp) };
        sums.0 += hr;
        sums.1 += hp;
        sums.2 += f1;
    }
    let n = per_pair.len().max(1) as f64;
    Ok(MetricsReport {
        mhr: sums.0 / n,
        mhp: sums.1 / n,
        mhf1: sums.2 / n,
        per_pair: per_pair.to_vec(),
        mean_time: 0.0,
    })
}
