//! The instance-by-instance loop.
//!
//! Each pass draws a fresh downsample of the surviving correspondences, mines
//! seeds, grows the dense set over all survivors, estimates a pose and
//! validates it. Whatever the verdict, the pass then removes every dense-set
//! member the pose explains (residual below `t_he`), topped up with the seeds
//! when that is fewer than `t_s`, or the whole dense set when no pose could be
//! estimated. The loop stops when the seed set is smaller than `t_s`, fewer
//! than three correspondences remain, or `max_iterations` passes have run.
//! Since at least `t_s` correspondences leave per pass, a run takes at most
//! `⌈|C| / t_s⌉` passes.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::{CorrId, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{cloud_resolution, PointCloud, RigidTransform};
use crate::neighbor::NeighborIndex;
use crate::pose::{correspondence_residual, gsac, ransac_baseline, Hypothesis};
use crate::seed::mine_seeds;
use crate::validation::{overlap_rate, validate_global, validate_local};
use crate::voting::{select_dense, vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Overlap rate of the transformed model against the scene.
    Global,
    /// Inlier count over the surviving correspondences.
    Local,
    /// Accept every hypothesis.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Gsac,
    Ransac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    /// Replicator dynamics with an Otsu cut.
    Gtm,
    /// Lowest nearest-neighbor similarity ratios.
    Nnsr,
}

/// Registration parameters. Distance thresholds are multiples of the source
/// cloud resolution and are converted to scene units at the start of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_downsample: usize,
    pub n_gtm: usize,
    pub n_vot: usize,
    pub n_gsac: usize,
    pub delta_r: f64,
    pub t_he: f64,
    pub d_op_th: f64,
    pub t_overlap: f64,
    pub t_s: usize,
    pub t_inliers: usize,
    pub nnsr_top_k: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
    pub validation_mode: ValidationMode,
    pub solver_mode: SolverMode,
    pub seed_mode: SeedMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl PipelineConfig {
    pub fn synthetic() -> Self {
        Self {
            n_downsample: 1024,
            n_gtm: 20,
            n_vot: 300,
            n_gsac: 100,
            delta_r: 10.0,
            t_he: 10.0,
            d_op_th: 1.5,
            t_overlap: 0.85,
            t_s: 5,
            t_inliers: 100,
            nnsr_top_k: 30,
            max_iterations: 64,
            rng_seed: 0,
            validation_mode: ValidationMode::Global,
            solver_mode: SolverMode::Gsac,
            seed_mode: SeedMode::Gtm,
        }
    }

    pub fn real() -> Self {
        Self { n_gsac: 20, t_he: 1.0, d_op_th: 3.0, t_overlap: 0.7, ..Self::synthetic() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_downsample", self.n_downsample),
            ("n_vot", self.n_vot),
            ("n_gsac", self.n_gsac),
            ("t_s", self.t_s),
            ("nnsr_top_k", self.nnsr_top_k),
            ("max_iterations", self.max_iterations),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v < 1) {
            return Err(Error::InvalidInput(format!("{name} must be at least 1")));
        }
        // Every pass must be able to remove t_s correspondences.
        if self.n_downsample < self.t_s {
            return Err(Error::InvalidInput("n_downsample must be at least t_s".into()));
        }
        for (name, v) in [("delta_r", self.delta_r), ("t_he", self.t_he), ("d_op_th", self.d_op_th)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_overlap > 0.0 && self.t_overlap < 1.0) {
            return Err(Error::InvalidInput(format!("t_overlap must lie in (0, 1), got {}", self.t_overlap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub transform: RigidTransform,
    pub overlap: f64,
    pub mae: f64,
    pub dense_ids: Vec<CorrId>,
    /// Correspondences this pass took out of the working set.
    pub removed_ids: Vec<CorrId>,
    pub accepted: bool,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationOutcome {
    /// Accepted instances in iteration order.
    pub results: Vec<InstanceResult>,
    pub rejected: Vec<InstanceResult>,
    /// Completed passes, i.e. passes that removed correspondences.
    pub iterations_run: usize,
    /// Source-cloud resolution the thresholds were scaled by.
    pub resolution: f64,
    pub wall_time: f64,
}

/// Keeps all of `set` when it fits in `n`, else a seeded uniform subset of
/// size `n` in the original order.
pub fn downsample(set: &CorrespondenceSet, n: usize, seed: u64) -> CorrespondenceSet {
    if set.len() <= n {
        return set.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, set.len(), n).into_vec();
    picked.sort_unstable();
    CorrespondenceSet::from_subset(picked.into_iter().map(|i| set.as_slice()[i]).collect())
}

/// The `top_k` correspondences with the smallest ratio, ties by ascending id.
pub fn nnsr_seed_alternative(set: &CorrespondenceSet, ratios: &HashMap<CorrId, f64>, top_k: usize) -> Result<CorrespondenceSet> {
    let mut ranked = Vec::with_capacity(set.len());
    for c in set {
        let r = *ratios.get(&c.id).ok_or(Error::MissingScores(c.id))?;
        ranked.push((r, *c));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    ranked.truncate(top_k);
    Ok(CorrespondenceSet::from_subset(ranked.into_iter().map(|(_, c)| c).collect()))
}

/// The dense-set members `pose` explains, or the whole dense set when there
/// is no pose. Seeds are added when that leaves fewer than `t_s`, so every
/// pass shrinks the working set by at least `t_s`.
fn removal_set(seeds: &CorrespondenceSet, dense: &CorrespondenceSet, pose: Option<&Hypothesis>, t_he: f64, t_s: usize) -> HashSet<CorrId> {
    let mut ids: HashSet<CorrId> = match pose {
        Some(h) => dense.iter().filter(|c| correspondence_residual(&h.transform, c) < t_he).map(|c| c.id).collect(),
        None => dense.iter().map(|c| c.id).collect(),
    };
    if ids.len() < t_s {
        ids.extend(seeds.iter().map(|c| c.id));
    }
    ids
}

// SplitMix64 finalizer, used to derive independent per-pass streams.
fn mix_seed(seed: u64, iteration: usize, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add((iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_ibi(corrs: &CorrespondenceSet, source: &PointCloud, target: &PointCloud, cfg: &PipelineConfig) -> Result<RegistrationOutcome> {
    run_ibi_with_ratios(corrs, None, source, target, cfg)
}

/// [`run_ibi`] with per-correspondence similarity ratios for [`SeedMode::Nnsr`].
pub fn run_ibi_with_ratios(
    corrs: &CorrespondenceSet,
    ratios: Option<&HashMap<CorrId, f64>>,
    source: &PointCloud,
    target: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<RegistrationOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    if corrs.is_empty() {
        return Err(Error::InvalidInput("correspondence set is empty".into()));
    }
    let ratios = match cfg.seed_mode {
        SeedMode::Gtm => None,
        SeedMode::Nnsr => {
            let r = ratios.ok_or_else(|| Error::MissingScores(corrs.as_slice()[0].id))?;
            if let Some(c) = corrs.iter().find(|c| !r.contains_key(&c.id)) {
                return Err(Error::MissingScores(c.id));
            }
            Some(r)
        }
    };

    let pr = if source.len() >= 2 { cloud_resolution(source)? } else { 0.0 };
    if !(pr > 0.0) {
        // Every threshold scales with pr, so nothing can be registered.
        return Ok(RegistrationOutcome { results: vec![], rejected: vec![], iterations_run: 0, resolution: pr, wall_time: started.elapsed().as_secs_f64() });
    }
    let delta_r = cfg.delta_r * pr;
    let t_he = cfg.t_he * pr;
    let d_op_th = cfg.d_op_th * pr;
    let target_index = NeighborIndex::new(target);

    let mut remaining = corrs.clone();
    let mut results = Vec::new();
    let mut rejected = Vec::new();
    let mut iteration = 0;

    while iteration < cfg.max_iterations && remaining.len() >= 3 {
        let sample = downsample(&remaining, cfg.n_downsample, mix_seed(cfg.rng_seed, iteration, 0));
        let seeds = match ratios {
            Some(r) => nnsr_seed_alternative(&sample, r, cfg.nnsr_top_k),
            None => mine_seeds(&sample, cfg.n_gtm, delta_r, mix_seed(cfg.rng_seed, iteration, 1)),
        };
        let seeds = match seeds {
            Ok(s) => s,
            Err(_) => {
                // No usable consistency in this sample: drop it and move on.
                let ids: HashSet<CorrId> = sample.iter().map(|c| c.id).collect();
                remaining = remaining.without(&ids);
                iteration += 1;
                continue;
            }
        };
        if seeds.len() < cfg.t_s {
            break;
        }

        let scores = vote(&remaining, &seeds, delta_r)?;
        let dense = select_dense(&remaining, &scores, cfg.n_vot);

        let hypothesis: Result<Hypothesis> = match cfg.solver_mode {
            SolverMode::Gsac => gsac(&dense, &scores, cfg.n_gsac, t_he),
            SolverMode::Ransac => ransac_baseline(&dense, cfg.n_gsac, t_he, mix_seed(cfg.rng_seed, iteration, 2)),
        };

        let removed = removal_set(&seeds, &dense, hypothesis.as_ref().ok(), t_he, cfg.t_s);
        if let Ok(h) = hypothesis {
            let overlap = overlap_rate(&h.transform, source, &target_index, d_op_th)?;
            let accepted = match cfg.validation_mode {
                ValidationMode::Global => validate_global(overlap, cfg.t_overlap),
                ValidationMode::Local => validate_local(&h.transform, &remaining, t_he, cfg.t_inliers).accepted,
                ValidationMode::None => true,
            };
            let result = InstanceResult {
                transform: h.transform,
                overlap,
                mae: h.mae,
                dense_ids: dense.ids(),
                removed_ids: remaining.iter().map(|c| c.id).filter(|id| removed.contains(id)).collect(),
                accepted,
                iteration,
            };
            if accepted {
                results.push(result);
            } else {
                rejected.push(result);
            }
        }

        remaining = remaining.without(&removed);
        iteration += 1;
    }

    Ok(RegistrationOutcome {
        results,
        rejected,
        iterations_run: iteration,
        resolution: pr,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
