//! Seed correspondence selection by game-theoretic matching.
//!
//! Correspondences are strategies in a symmetric game whose payoff rewards
//! pairs that agree on a single rigid motion. Replicator dynamics started near
//! the barycenter of the simplex concentrate population mass on the largest
//! mutually consistent group; an Otsu cut of the final population yields the
//! seed set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correspondence::{Correspondence, CorrespondenceSet};
use crate::error::{Error, Result};

/// Average payoffs at or below this value mean no mutual consistency is left.
pub const PAYOFF_EPS: f64 = 1e-12;
const OTSU_BINS: usize = 256;
const INIT_JITTER: f64 = 1e-4;

/// Difference between source-side and target-side pair distances.
#[inline]
pub fn rigidity(ci: &Correspondence, cj: &Correspondence) -> f64 {
    ((ci.source - cj.source).norm() - (ci.target - cj.target).norm()).abs()
}

/// Symmetric, zero-diagonal payoff matrix with entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    /// Validates shape, symmetry, zero diagonal and entry range.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("payoff matrix must be square".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let m = Self { n, data };
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(Error::InvalidInput("payoff diagonal must be zero".into()));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if !(0.0..=1.0).contains(&v) || v != m.get(j, i) {
                    return Err(Error::InvalidInput(format!("invalid payoff entry ({i}, {j})")));
                }
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        // Each row is summed sequentially, so the result is independent of thread count.
        self.data
            .par_chunks(self.n.max(1))
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Kernel payoff `exp(-r² / δ_r²)` off the diagonal, zero on it.
pub fn build_payoff_matrix(set: &CorrespondenceSet, delta_r: f64) -> Result<PayoffMatrix> {
    if !(delta_r > 0.0) {
        return Err(Error::InvalidInput(format!("delta_r must be positive, got {delta_r}")));
    }
    let items = set.as_slice();
    let n = items.len();
    let inv = 1.0 / (delta_r * delta_r);
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            if i != j {
                // Evaluate in canonical order so (i, j) and (j, i) are bitwise equal.
                let r = rigidity(&items[i.min(j)], &items[i.max(j)]);
                *slot = (-r * r * inv).exp();
            }
        }
    });
    Ok(PayoffMatrix { n, data })
}

/// A point on the probability simplex: one mass per strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Population(Vec<f64>);

impl Population {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput("population masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("population sums to {total}, expected 1")));
        }
        Ok(Self(masses))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// `(1 + ε_i) / Z` with ε_i uniform in ±1e-4 from a seeded generator.
    pub fn near_barycenter(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(-INIT_JITTER..=INIT_JITTER)).collect();
        let z: f64 = raw.iter().sum();
        Self(raw.into_iter().map(|v| v / z).collect())
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `xᵀ Π x`.
    pub fn average_payoff(&self, payoff: &PayoffMatrix) -> f64 {
        let px = payoff.mul_vec(&self.0);
        self.0.iter().zip(&px).map(|(a, b)| a * b).sum()
    }
}

/// One discrete replicator update `x_i ← x_i (Πx)_i / (xᵀΠx)`.
pub fn replicator_step(x: &Population, payoff: &PayoffMatrix) -> Result<Population> {
    if x.len() != payoff.size() {
        return Err(Error::InvalidInput("population and payoff sizes differ".into()));
    }
    let px = payoff.mul_vec(&x.0);
    let avg: f64 = x.0.iter().zip(&px).map(|(a, b)| a * b).sum();
    if !(avg > PAYOFF_EPS) {
        return Err(Error::DegeneratePayoff(avg));
    }
    Ok(Population(x.0.iter().zip(&px).map(|(xi, pi)| xi * pi / avg).collect()))
}

/// Runs `steps` replicator updates from `init`.
pub fn evolve(init: Population, payoff: &PayoffMatrix, steps: usize) -> Result<Population> {
    let mut x = init;
    for _ in 0..steps {
        x = replicator_step(&x, payoff)?;
    }
    Ok(x)
}

/// Builds the payoff for `set` and evolves a near-barycentric population `n_gtm` times.
pub fn run_gtm(set: &CorrespondenceSet, n_gtm: usize, delta_r: f64, seed: u64) -> Result<Population> {
    if set.len() < 2 {
        return Err(Error::InvalidInput(format!("game-theoretic matching needs at least 2 correspondences, got {}", set.len())));
    }
    let payoff = build_payoff_matrix(set, delta_r)?;
    evolve(Population::near_barycenter(set.len(), seed), &payoff, n_gtm)
}

/// Otsu's threshold over a 256-bin histogram spanning `[min, max]`.
///
/// Returns the bin edge that maximizes the between-class variance of the
/// split `{values below edge} | {values at or above edge}`.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("otsu needs at least 2 values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("otsu values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::DegenerateInput("all values are equal".into()));
    }
    let width = (hi - lo) / OTSU_BINS as f64;

    let mut counts = [0usize; OTSU_BINS];
    let mut sums = [0.0f64; OTSU_BINS];
    for &v in values {
        let bin = (((v - lo) / width) as usize).min(OTSU_BINS - 1);
        counts[bin] += 1;
        sums[bin] += v;
    }

    let n = values.len() as f64;
    let total_sum: f64 = sums.iter().sum();
    let (mut below_count, mut below_sum) = (0usize, 0.0f64);
    let mut best = (f64::NEG_INFINITY, 1usize);
    for edge in 1..OTSU_BINS {
        below_count += counts[edge - 1];
        below_sum += sums[edge - 1];
        let above_count = values.len() - below_count;
        let variance = if below_count == 0 || above_count == 0 {
            0.0
        } else {
            let w0 = below_count as f64 / n;
            let w1 = above_count as f64 / n;
            let mu0 = below_sum / below_count as f64;
            let mu1 = (total_sum - below_sum) / above_count as f64;
            w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
        };
        if variance > best.0 {
            best = (variance, edge);
        }
    }
    Ok(lo + best.1 as f64 * width)
}

/// Members whose mass is strictly above `threshold`, in input order.
pub fn select_seeds(set: &CorrespondenceSet, x: &Population, threshold: f64) -> Result<CorrespondenceSet> {
    if x.len() != set.len() {
        return Err(Error::InvalidInput("population and set sizes differ".into()));
    }
    Ok(CorrespondenceSet::from_subset(
        set.iter().zip(x.masses()).filter(|(_, &m)| m > threshold).map(|(c, _)| *c).collect(),
    ))
}

/// Full seed stage: replicator dynamics, Otsu cut, selection. An all-equal
/// population selects nothing.
pub fn mine_seeds(set: &CorrespondenceSet, n_gtm: usize, delta_r: f64, seed: u64) -> Result<CorrespondenceSet> {
    let x = run_gtm(set, n_gtm, delta_r, seed)?;
    match otsu_threshold(x.masses()) {
        Ok(t) => select_seeds(set, &x, t),
        Err(Error::DegenerateInput(_)) => Ok(CorrespondenceSet::default()),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, RigidTransform};
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(id: u32, s: [f64; 3], t: [f64; 3]) -> Correspondence {
        Correspondence::new(id, Point3::from(s), Point3::from(t))
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CorrespondenceSet {
        CorrespondenceSet::from_pairs((0..n).map(|_| {
            (
                Point3::new(rng.random_range(0.0..scale), rng.random_range(0.0..scale), rng.random_range(0.0..scale)),
                Point3::new(rng.random_range(0.0..scale), rng.random_range(0.0..scale), rng.random_range(0.0..scale)),
            )
        }))
        .unwrap()
    }

    /// `inliers` exact matches under one rigid motion plus `outliers` random pairs.
    fn group_with_outliers(inliers: usize, outliers: usize, seed: u64) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = RigidTransform::from_rotation(&Rotation3::from_euler_angles(0.3, -0.5, 1.1), Vector3::new(4.0, 1.0, -2.0));
        let mut pairs = Vec::new();
        for _ in 0..inliers {
            let p = Point3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            pairs.push((p, t.apply_point(&p)));
        }
        for _ in 0..outliers {
            let p = Point3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let q = Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            pairs.push((p, q));
        }
        CorrespondenceSet::from_pairs(pairs).unwrap()
    }

    #[test]
    fn rigidity_examples() {
        let a = c(0, [0.0, 0.0, 0.0], [5.0, 0.0, 0.0]);
        assert_eq!(rigidity(&a, &c(1, [1.0, 0.0, 0.0], [6.0, 0.0, 0.0])), 0.0);
        assert_eq!(rigidity(&a, &c(1, [1.0, 0.0, 0.0], [7.0, 0.0, 0.0])), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = random_set(&mut rng, 2000, 10.0);
        for pair in set.as_slice().chunks(2) {
            assert_eq!(rigidity(&pair[0], &pair[1]), rigidity(&pair[1], &pair[0]));
        }
    }

    #[test]
    fn payoff_examples() {
        let set = CorrespondenceSet::new(vec![c(0, [0.0; 3], [5.0, 0.0, 0.0]), c(1, [1.0, 0.0, 0.0], [6.0, 0.0, 0.0])]).unwrap();
        let p = build_payoff_matrix(&set, 0.5).unwrap();
        assert_eq!(p.get(0, 1), 1.0);
        assert_eq!(p.get(1, 0), 1.0);
        assert_eq!(p.get(0, 0), 0.0);

        let set = CorrespondenceSet::new(vec![c(0, [0.0; 3], [5.0, 0.0, 0.0]), c(1, [1.0, 0.0, 0.0], [7.0, 0.0, 0.0])]).unwrap();
        let p = build_payoff_matrix(&set, 1.0).unwrap();
        assert!((p.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.367879).abs() < 1e-6);

        assert!(matches!(build_payoff_matrix(&set, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(build_payoff_matrix(&set, -1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn payoff_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = random_set(&mut rng, 80, 3.0);
        let delta = 0.7;
        let p = build_payoff_matrix(&set, delta).unwrap();
        let items = set.as_slice();
        for i in 0..items.len() {
            for j in 0..items.len() {
                let ds = ((items[i].source.x - items[j].source.x).powi(2)
                    + (items[i].source.y - items[j].source.y).powi(2)
                    + (items[i].source.z - items[j].source.z).powi(2))
                .sqrt();
                let dt = ((items[i].target.x - items[j].target.x).powi(2)
                    + (items[i].target.y - items[j].target.y).powi(2)
                    + (items[i].target.z - items[j].target.z).powi(2))
                .sqrt();
                let expect = if i == j { 0.0 } else { (-((ds - dt).abs().powi(2)) / (delta * delta)).exp() };
                assert!((p.get(i, j) - expect).abs() < 1e-14, "({i},{j})");
                assert_eq!(p.get(i, j), p.get(j, i));
            }
        }
    }

    #[test]
    fn replicator_examples() {
        let p = PayoffMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = replicator_step(&Population::new(vec![0.5, 0.5]).unwrap(), &p).unwrap();
        assert_eq!(x.masses(), &[0.5, 0.5]);
        let x = replicator_step(&Population::new(vec![0.8, 0.2]).unwrap(), &p).unwrap();
        assert!((x.masses()[0] - 0.5).abs() < 1e-15 && (x.masses()[1] - 0.5).abs() < 1e-15);

        let zero = PayoffMatrix::from_rows(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(replicator_step(&Population::uniform(2), &zero), Err(Error::DegeneratePayoff(_))));
    }

    #[test]
    fn gtm_consistent_group_stays_balanced() {
        let set = group_with_outliers(4, 0, 7);
        let x = run_gtm(&set, 20, 0.1, 0).unwrap();
        let (lo, hi) = x.masses().iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
        assert!(hi <= lo * 1.1, "masses {:?}", x.masses());
    }

    #[test]
    fn gtm_suppresses_single_outlier() {
        let set = group_with_outliers(3, 1, 8);
        let x = run_gtm(&set, 20, 0.1, 0).unwrap();
        assert!(x.masses()[3] < 0.01, "masses {:?}", x.masses());
    }

    #[test]
    fn gtm_zero_steps_returns_initial_population() {
        let set = group_with_outliers(5, 5, 9);
        let x = run_gtm(&set, 0, 0.1, 17).unwrap();
        assert_eq!(x, Population::near_barycenter(10, 17));
        for m in x.masses() {
            assert!((m * 10.0 - 1.0).abs() < 2.1e-4);
        }
    }

    #[test]
    fn dominant_group_outranks_every_outlier() {
        for seed in 0..10 {
            let set = group_with_outliers(30, 10, 100 + seed);
            let x = run_gtm(&set, 20, 0.1, seed).unwrap();
            let m = x.masses();
            let min_in = m[..30].iter().copied().fold(f64::INFINITY, f64::min);
            let max_out = m[30..].iter().copied().fold(0.0, f64::max);
            assert!(min_in > max_out, "seed {seed}: {min_in} <= {max_out}");
        }
    }

    #[test]
    fn otsu_examples() {
        let t = otsu_threshold(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(t > 0.0 && t < 1.0);
        let t = otsu_threshold(&[0.0, 0.1, 0.9, 1.0]).unwrap();
        assert!(t > 0.1 && t < 0.9);
        assert!(matches!(otsu_threshold(&[2.0, 2.0, 2.0]), Err(Error::DegenerateInput(_))));
        assert!(matches!(otsu_threshold(&[2.0]), Err(Error::InvalidInput(_))));
    }

    /// Scans every interior bin edge, splitting the raw values directly.
    fn otsu_oracle(values: &[f64]) -> f64 {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = (hi - lo) / 256.0;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut best = (f64::NEG_INFINITY, lo);
        for k in 1..256 {
            let edge = lo + k as f64 * w;
            let (a, b): (Vec<f64>, Vec<f64>) = values.iter().partition(|&&v| v < edge);
            let var = if a.is_empty() || b.is_empty() {
                0.0
            } else {
                let n = values.len() as f64;
                (a.len() as f64 / n) * (b.len() as f64 / n) * (mean(&a) - mean(&b)).powi(2)
            };
            if var > best.0 {
                best = (var, edge);
            }
        }
        best.1
    }

    #[test]
    fn otsu_matches_exhaustive_scan_on_bimodal_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = rand_distr::Normal::new(0.2, 0.05).unwrap();
        let b = rand_distr::Normal::new(0.7, 0.1).unwrap();
        for _ in 0..5 {
            let values: Vec<f64> = (0..1000)
                .map(|_| if rng.random_bool(0.6) { rng.sample(a) } else { rng.sample(b) })
                .collect();
            assert_eq!(otsu_threshold(&values).unwrap(), otsu_oracle(&values));
        }
    }

    #[test]
    fn select_seeds_examples() {
        let set = group_with_outliers(3, 0, 1);
        let x = Population::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(select_seeds(&set, &x, 0.3).unwrap().ids(), vec![0, 1]);
        assert!(select_seeds(&set, &x, 0.4).unwrap().is_empty());
        assert_eq!(select_seeds(&set, &x, -1.0).unwrap().len(), 3);
    }

    #[test]
    fn select_seeds_is_id_permutation_invariant() {
        let set = group_with_outliers(6, 0, 2);
        let x = Population::new(vec![0.3, 0.05, 0.25, 0.1, 0.2, 0.1]).unwrap();
        let relabeled = CorrespondenceSet::new(
            set.iter().map(|c| Correspondence::new(100 - c.id, c.source, c.target)).collect(),
        )
        .unwrap();
        let a: Vec<_> = select_seeds(&set, &x, 0.15).unwrap().iter().map(|c| c.source).collect();
        let b: Vec<_> = select_seeds(&relabeled, &x, 0.15).unwrap().iter().map(|c| c.source).collect();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn replicator_preserves_simplex_and_raises_payoff(seed in 0u64..10_000, n in 2usize..24, delta in 0.05f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, n, 2.0);
            let p = build_payoff_matrix(&set, delta).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let x = Population::new(raw.iter().map(|v| v / z).collect()).unwrap();
            let before = x.average_payoff(&p);
            if let Ok(next) = replicator_step(&x, &p) {
                let s: f64 = next.masses().iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!(next.masses().iter().all(|m| *m >= 0.0));
                prop_assert!(next.average_payoff(&p) >= before - 1e-12);
            }
        }
    }
}
