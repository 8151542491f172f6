//! Transformation estimation from the dense set.
//!
//! [`gsac`] walks correspondence triples in descending order of their summed
//! voting score, fits a rigid transform to each, and keeps the one with the
//! highest MAE score over the dense set. [`ransac_baseline`] draws triples
//! uniformly instead and is otherwise identical.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correspondence::{CorrId, Correspondence, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{fit_point_pairs, triangle_area, RigidTransform, DEFAULT_AREA_EPS};
use crate::voting::VotingScores;

/// A candidate pose with its MAE score and the triple it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub transform: RigidTransform,
    pub mae: f64,
    pub triplet_ids: [CorrId; 3],
}

pub fn correspondence_residual(t: &RigidTransform, c: &Correspondence) -> f64 {
    (t.apply_point(&c.source) - c.target).norm()
}

/// Normalized margin `(t_he - e) / t_he` below the threshold, zero at or above it.
pub fn mae_contribution(e: f64, t_he: f64) -> Result<f64> {
    if !(t_he > 0.0) {
        return Err(Error::InvalidInput(format!("t_he must be positive, got {t_he}")));
    }
    Ok(contribution(e, t_he))
}

#[inline]
fn contribution(e: f64, t_he: f64) -> f64 {
    if e < t_he {
        (t_he - e) / t_he
    } else {
        0.0
    }
}

pub fn mae_score(t: &RigidTransform, eval_set: &CorrespondenceSet, t_he: f64) -> Result<f64> {
    if !(t_he > 0.0) {
        return Err(Error::InvalidInput(format!("t_he must be positive, got {t_he}")));
    }
    Ok(score_slice(t, eval_set.as_slice(), t_he))
}

fn score_slice(t: &RigidTransform, eval: &[Correspondence], t_he: f64) -> f64 {
    eval.iter().map(|c| contribution(correspondence_residual(t, c), t_he)).sum()
}

fn is_degenerate(a: &Correspondence, b: &Correspondence, c: &Correspondence) -> bool {
    !(triangle_area(&a.source, &b.source, &c.source) > DEFAULT_AREA_EPS)
}

#[derive(PartialEq)]
struct Frontier {
    sum: f64,
    ids: [CorrId; 3],
    pos: [usize; 3],
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Max-heap order: larger sum first, then lexicographically smaller sorted ids.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sum.total_cmp(&other.sum).then_with(|| other.ids.cmp(&self.ids))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Up to `n_gsac` non-collinear triples of `dense`, in descending order of
/// summed score with ties broken by sorted id triple.
///
/// Triples are index triples `i < j < k` into the score-sorted list. Moving
/// any index one step later never raises the sum or lowers the id key, so a
/// best-first walk from `(0, 1, 2)` emits triples in exact order while only
/// touching the frontier.
pub fn generate_guided_triplets(dense: &CorrespondenceSet, scores: &VotingScores, n_gsac: usize) -> Result<Vec<[CorrId; 3]>> {
    Ok(guided_order(dense, scores, n_gsac)?
        .into_iter()
        .map(|[a, b, c]| [a.id, b.id, c.id])
        .collect())
}

fn guided_order<'a>(dense: &'a CorrespondenceSet, scores: &VotingScores, n_gsac: usize) -> Result<Vec<[&'a Correspondence; 3]>> {
    let n = dense.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences(n));
    }
    let mut ranked: Vec<(f64, &Correspondence)> = dense.iter().map(|c| (scores.score(c.id), c)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));

    let make = |pos: [usize; 3]| {
        let mut ids = pos.map(|p| ranked[p].1.id);
        ids.sort_unstable();
        Frontier { sum: ranked[pos[0]].0 + ranked[pos[1]].0 + ranked[pos[2]].0, ids, pos }
    };

    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(make([0, 1, 2]));
    seen.insert([0, 1, 2]);
    let mut out = Vec::new();
    while let Some(top) = heap.pop() {
        let [i, j, k] = top.pos;
        let trip = [ranked[i].1, ranked[j].1, ranked[k].1];
        if !is_degenerate(trip[0], trip[1], trip[2]) {
            out.push(trip);
            if out.len() >= n_gsac {
                break;
            }
        }
        let next = [
            (i + 1 < j).then_some([i + 1, j, k]),
            (j + 1 < k).then_some([i, j + 1, k]),
            (k + 1 < n).then_some([i, j, k + 1]),
        ];
        for pos in next.into_iter().flatten() {
            if seen.insert(pos) {
                heap.push(make(pos));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::TooDegenerate);
    }
    Ok(out)
}

fn fit_triplet(trip: [&Correspondence; 3]) -> Option<RigidTransform> {
    let src = trip.map(|c| c.source);
    let dst = trip.map(|c| c.target);
    fit_point_pairs(&src, &dst, DEFAULT_AREA_EPS).ok()
}

/// Scores every triple in parallel and reduces in input order, so the first
/// of equally scored hypotheses wins regardless of scheduling.
fn best_hypothesis(triples: Vec<[&Correspondence; 3]>, eval: &[Correspondence], t_he: f64) -> Result<Hypothesis> {
    let hyps: Vec<Option<Hypothesis>> = triples
        .par_iter()
        .map(|trip| {
            fit_triplet(*trip).map(|transform| Hypothesis {
                transform,
                mae: score_slice(&transform, eval, t_he),
                triplet_ids: trip.map(|c| c.id),
            })
        })
        .collect();
    let mut best: Option<Hypothesis> = None;
    for h in hyps.into_iter().flatten() {
        if best.is_none_or(|b| h.mae > b.mae) {
            best = Some(h);
        }
    }
    best.ok_or(Error::TooDegenerate)
}

/// Guided sample consensus over the dense set.
pub fn gsac(dense: &CorrespondenceSet, scores: &VotingScores, n_gsac: usize, t_he: f64) -> Result<Hypothesis> {
    if !(t_he > 0.0) {
        return Err(Error::InvalidInput(format!("t_he must be positive, got {t_he}")));
    }
    best_hypothesis(guided_order(dense, scores, n_gsac)?, dense.as_slice(), t_he)
}

/// Uniform three-point sampling with a seeded generator; collinear draws are
/// redrawn and do not count toward `iterations`.
pub fn ransac_baseline(dense: &CorrespondenceSet, iterations: usize, t_he: f64, seed: u64) -> Result<Hypothesis> {
    let n = dense.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences(n));
    }
    if !(t_he > 0.0) {
        return Err(Error::InvalidInput(format!("t_he must be positive, got {t_he}")));
    }
    let items = dense.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_draws = iterations.saturating_mul(100).max(1000);
    let mut triples = Vec::with_capacity(iterations);
    let mut draws = 0;
    while triples.len() < iterations && draws < max_draws {
        draws += 1;
        let picked = rand::seq::index::sample(&mut rng, n, 3);
        let (a, b, c) = (&items[picked.index(0)], &items[picked.index(1)], &items[picked.index(2)]);
        if !is_degenerate(a, b, c) {
            triples.push([a, b, c]);
        }
    }
    if triples.is_empty() {
        return Err(Error::TooDegenerate);
    }
    best_hypothesis(triples, items, t_he)
}
