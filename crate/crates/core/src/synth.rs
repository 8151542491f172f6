//! Synthetic multi-instance scenes with ground truth.
//!
//! A scene holds `k` rigidly transformed copies of a model plus uniform
//! clutter. Correspondences mix noisy ground-truth matches with uniformly
//! random (model point, scene point) pairs at a controlled outlier ratio.

use std::ops::Range;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, UnitSphere};

use crate::correspondence::{CorrId, Correspondence, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{cloud_resolution, Point3, PointCloud, RigidTransform};

pub const MAX_INSTANCES: usize = 20;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroundTruth {
    pub model: PointCloud,
    pub scene: PointCloud,
    pub poses: Vec<RigidTransform>,
    pub instance_point_ranges: Vec<Range<usize>>,
    pub clutter_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOptions {
    /// Minimum distance between instance centers, in model diameters. Zero
    /// lets instances overlap freely.
    pub min_separation: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { min_separation: 1.0 }
    }
}

/// Ground-truth label of one correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Inlier(usize),
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorrespondences {
    pub set: CorrespondenceSet,
    /// Indexed by correspondence id; ids run `0..set.len()`.
    pub labels: Vec<Label>,
}

impl LabeledCorrespondences {
    pub fn label(&self, id: CorrId) -> Option<Label> {
        self.labels.get(id as usize).copied()
    }

    pub fn outlier_ratio(&self) -> f64 {
        let outliers = self.labels.iter().filter(|l| **l == Label::Outlier).count();
        outliers as f64 / self.labels.len().max(1) as f64
    }
}

/// Smallest `m` with `m³ ≥ k`.
fn cube_root_ceil(k: usize) -> usize {
    (1..).find(|m: &usize| m * m * m >= k).unwrap_or(1)
}

/// Rotation from a normalized 4D Gaussian, which is uniform over SO(3).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-9 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

/// A deterministic asymmetric test shape: an ellipsoidal body, an offset
/// head, two ears and a short tail, with diameter close to one.
pub fn builtin_model(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (center, radii, share of points)
    let parts: [([f64; 3], [f64; 3], f64); 5] = [
        ([0.0, 0.0, 0.0], [0.36, 0.24, 0.21], 0.50),
        ([0.36, 0.10, 0.16], [0.14, 0.13, 0.12], 0.24),
        ([0.40, 0.05, 0.36], [0.035, 0.03, 0.11], 0.09),
        ([0.34, 0.18, 0.35], [0.035, 0.03, 0.10], 0.09),
        ([-0.40, -0.02, 0.06], [0.07, 0.05, 0.05], 0.08),
    ];
    let mut points = Vec::with_capacity(n);
    let mut assigned = 0;
    for (i, (center, radii, share)) in parts.iter().enumerate() {
        let count = if i + 1 == parts.len() { n - assigned } else { ((n as f64) * share).round() as usize };
        let count = count.min(n - assigned);
        assigned += count;
        for _ in 0..count {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            points.push(Point3::new(
                center[0] + radii[0] * d[0],
                center[1] + radii[1] * d[1],
                center[2] + radii[2] * d[2],
            ));
        }
    }
    PointCloud::new(points).expect("builtin model is nonempty and finite")
}

pub fn generate_scene(model: &PointCloud, k: usize, clutter_count: usize, rng_seed: u64) -> Result<SceneGroundTruth> {
    generate_scene_with(model, k, clutter_count, rng_seed, SceneOptions::default())
}

/// Places `k` copies with uniform rotations and translations uniform in a
/// cube of side `6 · diameter · ⌈k^(1/3)⌉`, then adds clutter inside the
/// bounding box of the placed copies.
pub fn generate_scene_with(
    model: &PointCloud,
    k: usize,
    clutter_count: usize,
    rng_seed: u64,
    opts: SceneOptions,
) -> Result<SceneGroundTruth> {
    if !(1..=MAX_INSTANCES).contains(&k) {
        return Err(Error::InvalidInput(format!("instance count must be in [1, {MAX_INSTANCES}], got {k}")));
    }
    if !(opts.min_separation >= 0.0) {
        return Err(Error::InvalidInput("min_separation must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let diameter = model.diameter().max(f64::EPSILON);
    let side = 6.0 * diameter * cube_root_ceil(k) as f64;
    let centroid = model.centroid();
    let min_gap = opts.min_separation * diameter;

    let mut poses: Vec<RigidTransform> = Vec::with_capacity(k);
    let mut centers: Vec<Point3> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let q = random_rotation(&mut rng);
            let t = Vector3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), rng.random_range(0.0..side));
            let pose = RigidTransform::from_quaternion(&q, t);
            let center = pose.apply_point(&centroid);
            let clear = centers.iter().all(|c| (c - center).norm() >= min_gap);
            if clear || attempt >= PLACEMENT_ATTEMPTS {
                poses.push(pose);
                centers.push(center);
                break;
            }
        }
    }

    let mut points = Vec::with_capacity(k * model.len() + clutter_count);
    let mut ranges = Vec::with_capacity(k);
    for pose in &poses {
        let start = points.len();
        points.extend(model.points().iter().map(|p| pose.apply_point(p)));
        ranges.push(start..points.len());
    }
    let (lo, hi) = points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(&p.coords), hi.sup(&p.coords)),
    );
    for _ in 0..clutter_count {
        points.push(Point3::from(Vector3::from_fn(|i, _| {
            if hi[i] > lo[i] {
                rng.random_range(lo[i]..hi[i])
            } else {
                lo[i]
            }
        })));
    }

    Ok(SceneGroundTruth {
        model: model.clone(),
        scene: PointCloud::new(points)?,
        poses,
        instance_point_ranges: ranges,
        clutter_count,
    })
}

/// Mixes `inliers_per_instance` noisy ground-truth matches per instance with
/// random pairs so that outliers make up `outlier_ratio` of the result.
/// `noise_sigma` is in multiples of the model resolution. Ids are assigned
/// after shuffling, so they carry no label information.
pub fn generate_correspondences(
    gt: &SceneGroundTruth,
    inliers_per_instance: usize,
    outlier_ratio: f64,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<LabeledCorrespondences> {
    if inliers_per_instance < 1 {
        return Err(Error::InvalidInput("inliers_per_instance must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&outlier_ratio) {
        return Err(Error::InvalidInput(format!("outlier_ratio must lie in [0, 1), got {outlier_ratio}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise_sigma must be nonnegative, got {noise_sigma}")));
    }
    let pr = if gt.model.len() >= 2 { cloud_resolution(&gt.model)? } else { 0.0 };
    let noise = Normal::new(0.0, noise_sigma * pr).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let model = gt.model.points();
    let scene = gt.scene.points();

    let mut entries: Vec<(Point3, Point3, Label)> = Vec::new();
    for (j, pose) in gt.poses.iter().enumerate() {
        let picks: Vec<usize> = if inliers_per_instance <= model.len() {
            rand::seq::index::sample(&mut rng, model.len(), inliers_per_instance).into_vec()
        } else {
            (0..inliers_per_instance).map(|_| rng.random_range(0..model.len())).collect()
        };
        for i in picks {
            let p = model[i];
            let mut q = pose.apply_point(&p);
            if noise_sigma > 0.0 {
                q += Vector3::from_fn(|_, _| noise.sample(&mut rng));
            }
            entries.push((p, q, Label::Inlier(j)));
        }
    }
    let n_in = entries.len() as f64;
    let n_out = (outlier_ratio * n_in / (1.0 - outlier_ratio)).round() as usize;
    for _ in 0..n_out {
        let p = model[rng.random_range(0..model.len())];
        let q = scene[rng.random_range(0..scene.len())];
        entries.push((p, q, Label::Outlier));
    }
    entries.shuffle(&mut rng);

    let labels = entries.iter().map(|e| e.2).collect();
    let set = CorrespondenceSet::new(
        entries
            .into_iter()
            .enumerate()
            .map(|(i, (p, q, _))| Correspondence::new(i as CorrId, p, q))
            .collect(),
    )?;
    Ok(LabeledCorrespondences { set, labels })
}

/// Everything needed to build one labeled synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneRecipe {
    pub instances: usize,
    pub model_points: usize,
    pub clutter_count: usize,
    pub inliers_per_instance: usize,
    pub outlier_ratio: f64,
    /// Multiples of the model resolution.
    pub noise_sigma: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        Self {
            instances: 3,
            model_points: 256,
            clutter_count: 128,
            inliers_per_instance: 20,
            outlier_ratio: 0.5,
            noise_sigma: 0.5,
            min_separation: 1.0,
            seed: 0,
        }
    }
}

/// Builtin model, scene and labeled correspondences for `recipe`. The scene
/// and correspondence streams are derived from the one seed.
pub fn synthesize(recipe: &SceneRecipe) -> Result<(SceneGroundTruth, LabeledCorrespondences)> {
    synthesize_from(&builtin_model(recipe.model_points, 0), recipe)
}

/// [`synthesize`] around a caller-supplied model; `recipe.model_points` is ignored.
pub fn synthesize_from(model: &PointCloud, recipe: &SceneRecipe) -> Result<(SceneGroundTruth, LabeledCorrespondences)> {
    let gt = generate_scene_with(
        model,
        recipe.instances,
        recipe.clutter_count,
        recipe.seed,
        SceneOptions { min_separation: recipe.min_separation },
    )?;
    let labeled = generate_correspondences(
        &gt,
        recipe.inliers_per_instance,
        recipe.outlier_ratio,
        recipe.noise_sigma,
        recipe.seed ^ 0x5EED_C0DE_0000_0001,
    )?;
    Ok((gt, labeled))
}
