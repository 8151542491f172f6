//! Correspondence enhancement: seeds vote for every candidate by pairwise
//! compatibility, and the best-supported candidates form the dense set.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::correspondence::{CorrId, Correspondence, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::seed::rigidity;

/// `exp(-r² / δ_r²)` for the rigidity `r` of the pair.
pub fn compatibility(ci: &Correspondence, cj: &Correspondence, delta_r: f64) -> Result<f64> {
    if !(delta_r > 0.0) {
        return Err(Error::InvalidInput(format!("delta_r must be positive, got {delta_r}")));
    }
    Ok(kernel(rigidity(ci, cj), delta_r))
}

#[inline]
fn kernel(r: f64, delta_r: f64) -> f64 {
    (-(r * r) / (delta_r * delta_r)).exp()
}

/// Voting score per candidate id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VotingScores {
    scores: HashMap<CorrId, f64>,
}

impl VotingScores {
    pub fn from_pairs<I: IntoIterator<Item = (CorrId, f64)>>(pairs: I) -> Self {
        Self { scores: pairs.into_iter().collect() }
    }

    pub fn get(&self, id: CorrId) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    /// Score of `id`, or 0 when it was never scored.
    pub fn score(&self, id: CorrId) -> f64 {
        self.get(id).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Sums the compatibility of each candidate with every voter. A candidate
/// that is also a voter collects its own unit vote.
pub fn vote(candidates: &CorrespondenceSet, voters: &CorrespondenceSet, delta_r: f64) -> Result<VotingScores> {
    if voters.is_empty() {
        return Err(Error::InvalidInput("voting set is empty".into()));
    }
    if !(delta_r > 0.0) {
        return Err(Error::InvalidInput(format!("delta_r must be positive, got {delta_r}")));
    }
    let voters = voters.as_slice();
    let scores: Vec<(CorrId, f64)> = candidates
        .as_slice()
        .par_iter()
        .map(|c| {
            let s: f64 = voters.iter().map(|v| kernel(rigidity(c, v), delta_r)).sum();
            (c.id, s)
        })
        .collect();
    Ok(VotingScores::from_pairs(scores))
}

/// The `n_vot` highest-scoring candidates, best first, ties by ascending id.
pub fn select_dense(candidates: &CorrespondenceSet, scores: &VotingScores, n_vot: usize) -> CorrespondenceSet {
    let mut ranked: Vec<(f64, Correspondence)> =
        candidates.iter().map(|c| (scores.score(c.id), *c)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    ranked.truncate(n_vot);
    CorrespondenceSet::from_subset(ranked.into_iter().map(|(_, c)| c).collect())
}
