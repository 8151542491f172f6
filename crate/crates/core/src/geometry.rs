//! 3D primitives, the closed-form rigid solver and pose-error measures.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::neighbor::NeighborIndex;

pub type Point3 = nalgebra::Point3<f64>;

/// Source triples spanning less area than this (scene-units²) are treated as collinear.
pub const DEFAULT_AREA_EPS: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

pub fn is_finite_point(p: &Point3) -> bool {
    p.coords.iter().all(|c| c.is_finite())
}

/// A nonempty list of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !is_finite_point(p)) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    /// Largest pairwise distance between points. Quadratic; intended for model-sized clouds.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("transform has non-finite entries".into()));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if gram_err > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_rotation(rotation: &Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *rotation.matrix(), translation }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::from_rotation(&q.to_rotation_matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn apply_transform(transform: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud { points: cloud.points.iter().map(|p| transform.apply_point(p)).collect() }
}

/// Half the norm of `(b - a) × (c - a)`.
pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Area of a near-maximal triangle spanned by `points`: anchor at the first
/// point, take the point farthest from it, then the point farthest off that
/// line. Zero for fewer than three points.
pub fn spanning_area(points: &[Point3]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let a = points[0];
    let b = points
        .iter()
        .copied()
        .max_by(|p, q| (p - a).norm_squared().total_cmp(&(q - a).norm_squared()))
        .unwrap_or(a);
    points.iter().map(|c| triangle_area(&a, &b, c)).fold(0.0, f64::max)
}

/// Least-squares rigid transform mapping sources onto targets with the default
/// collinearity guard.
pub fn estimate_rigid_transform<'a, I>(corrs: I) -> Result<RigidTransform>
where
    I: IntoIterator<Item = &'a Correspondence>,
{
    estimate_rigid_transform_with(corrs, DEFAULT_AREA_EPS)
}

/// Centroid alignment followed by an SVD of the cross-covariance, with the
/// last singular direction flipped when needed so that `det(R) = +1`.
pub fn estimate_rigid_transform_with<'a, I>(corrs: I, area_eps: f64) -> Result<RigidTransform>
where
    I: IntoIterator<Item = &'a Correspondence>,
{
    let (src, dst): (Vec<Point3>, Vec<Point3>) =
        corrs.into_iter().map(|c| (c.source, c.target)).unzip();
    fit_point_pairs(&src, &dst, area_eps)
}

pub fn fit_point_pairs(src: &[Point3], dst: &[Point3], area_eps: f64) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput("source and target lengths differ".into()));
    }
    if src.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "rigid fit needs at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let area = spanning_area(src);
    if !(area > area_eps) {
        return Err(Error::DegenerateInput(format!(
            "source points are collinear (spanning area {area:e})"
        )));
    }

    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }

    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateInput("SVD of cross-covariance failed".into())),
    };
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = v * correction * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform { rotation, translation })
}

/// Mean distance from each point to its nearest other point.
pub fn cloud_resolution(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(Error::InvalidInput("resolution needs at least 2 points".into()));
    }
    let index = NeighborIndex::new(cloud);
    let total: f64 = (0..cloud.len())
        .map(|i| index.nearest_excluding(&cloud.points[i], i).map_or(0.0, |(_, d)| d))
        .sum();
    Ok(total / cloud.len() as f64)
}

pub fn point_to_cloud_distance(p: &Point3, index: &NeighborIndex) -> f64 {
    index.nearest_distance(p)
}

/// Geodesic angle between two rotations, in degrees.
///
/// Equals `acos(clamp((tr(RaᵀRb) - 1) / 2))`; the sine is taken from the
/// skew part so small angles keep full precision.
pub fn rotation_error_deg(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let m = ra.transpose() * rb;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (skew.norm() / 2.0).min(1.0);
    sin.atan2(cos).to_degrees()
}

pub fn translation_error(ta: &Vector3<f64>, tb: &Vector3<f64>) -> f64 {
    (ta - tb).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::FRAC_PI_2;

    fn corr(id: u32, s: [f64; 3], t: [f64; 3]) -> Correspondence {
        Correspondence::new(id, Point3::from(s), Point3::from(t))
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Rotation3::from_scaled_axis(axis.normalize() * rng.random_range(0.0..3.1))
    }

    #[test]
    fn identity_triple() {
        let c = [
            corr(0, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            corr(1, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            corr(2, [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
        ];
        let t = estimate_rigid_transform(&c).unwrap();
        assert!((t.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(t.translation().norm() < 1e-12);
    }

    #[test]
    fn exact_quarter_turn_recovery() {
        let truth = RigidTransform::from_rotation(
            &Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let src = [[0.3, -0.2, 0.5], [1.4, 0.1, -0.7], [-0.6, 2.0, 0.2]];
        let c: Vec<_> = src
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p = Point3::from(*s);
                Correspondence::new(i as u32, p, truth.apply_point(&p))
            })
            .collect();
        let t = estimate_rigid_transform(&c).unwrap();
        assert!((t.rotation() - truth.rotation()).amax() < 1e-9);
        assert!((t.translation() - truth.translation()).amax() < 1e-9);
    }

    #[test]
    fn rejects_collinear_and_short_input() {
        let line = [
            corr(0, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            corr(1, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            corr(2, [2.0, 0.0, 0.0], [2.0, 0.0, 0.0]),
        ];
        assert!(matches!(estimate_rigid_transform(&line), Err(Error::DegenerateInput(_))));
        let coincident = [corr(0, [1.0; 3], [0.0; 3]), corr(1, [1.0; 3], [1.0; 3]), corr(2, [1.0; 3], [2.0; 3])];
        assert!(matches!(estimate_rigid_transform(&coincident), Err(Error::DegenerateInput(_))));
        assert!(matches!(estimate_rigid_transform(&line[..2]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn reflection_is_corrected() {
        // Targets are a mirror image of the sources; the solver must still return a proper rotation.
        let c = [
            corr(0, [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]),
            corr(1, [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
            corr(2, [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]),
            corr(3, [1.0, 1.0, 1.0], [-1.0, 1.0, 1.0]),
        ];
        let t = estimate_rigid_transform(&c).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
        RigidTransform::new(*t.rotation(), *t.translation()).unwrap();
    }

    fn rms(t: &RigidTransform, c: &[Correspondence]) -> f64 {
        (c.iter().map(|c| (t.apply_point(&c.source) - c.target).norm_squared()).sum::<f64>() / c.len() as f64).sqrt()
    }

    /// Grid search over ZYZ Euler angles at 1° resolution, translation fixed
    /// by the centroid difference (optimal for any fixed rotation).
    fn grid_oracle_rms(c: &[Correspondence]) -> f64 {
        let n = c.len() as f64;
        let cs = c.iter().fold(Vector3::zeros(), |a, c| a + c.source.coords) / n;
        let cd = c.iter().fold(Vector3::zeros(), |a, c| a + c.target.coords) / n;
        let s: Vec<Vector3<f64>> = c.iter().map(|c| c.source.coords - cs).collect();
        let d: Vec<Vector3<f64>> = c.iter().map(|c| c.target.coords - cd).collect();
        let rad = |deg: i32| (deg as f64).to_radians();
        let mut best = f64::INFINITY;
        for a in 0..360 {
            let rz1 = Rotation3::from_axis_angle(&Vector3::z_axis(), rad(a));
            for b in 0..=180 {
                let ry = rz1 * Rotation3::from_axis_angle(&Vector3::y_axis(), rad(b));
                for g in 0..360 {
                    let r = (ry * Rotation3::from_axis_angle(&Vector3::z_axis(), rad(g))).into_inner();
                    let mut sse = 0.0;
                    for (si, di) in s.iter().zip(&d) {
                        sse += (r * si - di).norm_squared();
                        if sse >= best {
                            break;
                        }
                    }
                    best = best.min(sse);
                }
            }
        }
        (best / n).sqrt()
    }

    #[test]
    fn noisy_fit_beats_rotation_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = RigidTransform::from_rotation(&random_rotation(&mut rng), Vector3::new(0.5, -1.0, 2.0));
        let noise = Normal::new(0.0, 0.01).unwrap();
        let c: Vec<_> = (0..10)
            .map(|i| {
                let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let q = truth.apply_point(&p) + Vector3::from_fn(|_, _| noise.sample(&mut rng));
                Correspondence::new(i, p, q)
            })
            .collect();
        let fit = estimate_rigid_transform(&c).unwrap();
        let oracle = grid_oracle_rms(&c);
        assert!(rms(&fit, &c) <= oracle, "fit rms {} > grid oracle {}", rms(&fit, &c), oracle);
    }

    #[test]
    fn noise_free_random_triples_recover_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let truth = RigidTransform::from_rotation(
                &random_rotation(&mut rng),
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            );
            let c: Vec<_> = (0..3)
                .map(|i| {
                    let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    Correspondence::new(i, p, truth.apply_point(&p))
                })
                .collect();
            let fit = match estimate_rigid_transform(&c) {
                Ok(f) => f,
                Err(Error::DegenerateInput(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            assert!(rotation_error_deg(fit.rotation(), truth.rotation()) <= 1e-6);
            assert!(translation_error(fit.translation(), truth.translation()) <= 1e-9);
        }
    }

    #[test]
    fn apply_transform_cases() {
        let cloud = PointCloud::new(vec![Point3::origin()]).unwrap();
        let shifted = apply_transform(&RigidTransform::new(Matrix3::identity(), Vector3::x()).unwrap(), &cloud);
        assert_eq!(shifted.points()[0], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(apply_transform(&RigidTransform::identity(), &cloud), cloud);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = RigidTransform::from_rotation(&random_rotation(&mut rng), Vector3::new(3.0, -2.0, 1.0));
        let pts: Vec<Point3> = (0..50)
            .map(|_| Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let back = apply_transform(&t, &apply_transform(&t.inverse(), &cloud));
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!((a - b).norm() < 1e-9);
        }
        let moved = apply_transform(&t, &cloud);
        for i in 0..cloud.len() {
            for j in 0..cloud.len() {
                let before = (cloud.points()[i] - cloud.points()[j]).norm();
                let after = (moved.points()[i] - moved.points()[j]).norm();
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resolution_examples() {
        let two = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(cloud_resolution(&two).unwrap(), 1.0);
        let three = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(cloud_resolution(&three).unwrap(), 1.0);
        let one = PointCloud::new(vec![Point3::origin()]).unwrap();
        assert!(matches!(cloud_resolution(&one), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn resolution_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..300)
            .map(|_| Point3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let t = RigidTransform::from_rotation(&random_rotation(&mut rng), Vector3::new(10.0, 4.0, -7.0));
        let a = cloud_resolution(&cloud).unwrap();
        let b = cloud_resolution(&apply_transform(&t, &cloud)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rotation_error_cases() {
        let ra = *random_rotation(&mut ChaCha8Rng::seed_from_u64(1)).matrix();
        assert!(rotation_error_deg(&ra, &ra) < 1e-6);
        let rz = *Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2).matrix();
        assert!((rotation_error_deg(&ra, &(ra * rz)) - 90.0).abs() < 1e-9);
        assert_eq!(translation_error(&Vector3::new(3.0, 0.0, 0.0), &Vector3::new(0.0, 4.0, 0.0)), 5.0);
    }

    #[test]
    fn rotation_error_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let qa = UnitQuaternion::from_rotation_matrix(&a);
            let qb = UnitQuaternion::from_rotation_matrix(&b);
            let dot = qa.coords.dot(&qb.coords).abs().min(1.0);
            let oracle = (2.0 * dot.acos()).to_degrees();
            assert!((rotation_error_deg(a.matrix(), b.matrix()) - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn transform_validation() {
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = -1.0;
        assert!(RigidTransform::new(bad, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity(), Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Point3::new(f64::INFINITY, 0.0, 0.0)]).is_err());
    }
}
