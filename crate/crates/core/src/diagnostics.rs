//! Empirical checks of the tree hypotheses and of the measure-theoretic
//! quantities behind the density argument.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{find_periodic_orbits, OrbitKind};
use crate::error::{Error, Result};
use crate::lifting::Polyline;
use crate::map::RationalMap;
use crate::sphere::{chordal_distance, SpherePoint, SPHERE_AREA};
use crate::tree::CodingTree;

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for stream `index` under a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Product measure on words with symbol probabilities `weights`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliSampler {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    seed: u64,
}

impl BernoulliSampler {
    pub fn new(weights: Vec<f64>, seed: u64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidSampler("need at least two symbols".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidSampler("weights must be positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSampler(format!("weights sum to {sum}, not 1")));
        }
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            weights,
            cumulative,
            seed,
        })
    }

    pub fn uniform(d: usize, seed: u64) -> Result<Self> {
        Self::new(vec![1.0 / d as f64; d], seed)
    }

    pub fn degree(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// `theta = -log max p_i`.
    pub fn theta(&self) -> f64 {
        -self.weights.iter().copied().fold(0.0, f64::max).ln()
    }

    /// `nu(cylinder of length m + 1) / nu(cylinder of length k + 1)` along
    /// `word`: the product of `p` over positions `k+1..=m`.
    pub fn cylinder_ratio(&self, word: &[u8], k: usize, m: usize) -> f64 {
        word[k + 1..=m]
            .iter()
            .map(|&s| self.weights[s as usize - 1])
            .product()
    }

    /// Generator for trial `trial`, independent across trials.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, trial))
    }

    pub fn draw_symbol(&self, rng: &mut impl Rng) -> u8 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.weights.len() - 1);
        idx as u8 + 1
    }

    /// Appends symbols until `word` has length `len`.
    pub fn extend(&self, word: &mut Vec<u8>, len: usize, rng: &mut impl Rng) {
        while word.len() < len {
            word.push(self.draw_symbol(rng));
        }
    }

    /// The word of trial `trial`, truncated to `len` symbols. Longer draws
    /// of the same trial extend shorter ones.
    pub fn word(&self, trial: u64, len: usize) -> Vec<u8> {
        let mut rng = self.rng(trial);
        let mut w = Vec::with_capacity(len);
        self.extend(&mut w, len, &mut rng);
        w
    }
}

/// Outcome of the condition (i) check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pass: bool,
    pub min_distance: f64,
    pub margin: f64,
    /// Index of the base curve that came closest.
    pub closest_curve: usize,
    pub closest_point: SpherePoint,
    pub forbidden_points: usize,
}

/// Critical points, `K` forward images of each, and the points of
/// non-repelling cycles of period at most `closure_period` (the possible
/// limits of critical orbits).
pub fn forbidden_set(map: &RationalMap, k: usize, closure_period: usize) -> Result<Vec<SpherePoint>> {
    let crit = map.critical_points(k.max(1) + 1)?;
    let mut pts: Vec<SpherePoint> = crit.orbits.iter().flatten().copied().collect();
    for n in 1..=closure_period {
        match find_periodic_orbits(map, n) {
            Ok(orbits) => pts.extend(
                orbits
                    .into_iter()
                    .filter(|o| o.kind != OrbitKind::Repelling)
                    .flat_map(|o| o.points),
            ),
            Err(Error::DegreeOverflow { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(pts)
}

/// Distance from the base curves to the closure of the postcritical set.
pub fn check_condition_i(map: &RationalMap, base_curves: &[Polyline], k: usize, margin: f64) -> Result<ConditionReport> {
    let forbidden = forbidden_set(map, k, 4)?;
    let mut best = (f64::INFINITY, 0, SpherePoint::Infinity);
    for (j, curve) in base_curves.iter().enumerate() {
        for &p in &forbidden {
            let dist = curve.distance_to(p);
            if dist < best.0 {
                best = (dist, j, p);
            }
        }
    }
    Ok(ConditionReport {
        pass: best.0 > margin,
        min_distance: best.0,
        margin,
        closest_curve: best.1,
        closest_point: best.2,
        forbidden_points: forbidden.len(),
    })
}

/// Region whose preimage volume is estimated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Region {
    /// Chordal disc.
    Disc { center: SpherePoint, radius: f64 },
    /// Chordal neighborhood of a polyline.
    Tube { curve: Polyline, radius: f64 },
    Sphere,
}

impl Region {
    pub fn contains(&self, p: SpherePoint) -> bool {
        match self {
            Region::Disc { center, radius } => chordal_distance(*center, p) < *radius,
            Region::Tube { curve, radius } => curve.distance_to(p) < *radius,
            Region::Sphere => true,
        }
    }

    /// Spherical area when known in closed form. A chordal disc of radius
    /// `r` is a cap of area `pi r^2`.
    pub fn area(&self) -> Option<f64> {
        match self {
            Region::Disc { radius, .. } => Some(std::f64::consts::PI * radius.min(2.0).powi(2)),
            Region::Sphere => Some(SPHERE_AREA),
            Region::Tube { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeDecayEstimate {
    pub region_index: usize,
    pub n: usize,
    pub epsilon_hat: f64,
    pub stderr: f64,
    pub samples: usize,
}

const BATCH: usize = 4096;

/// Uniform point on the sphere.
pub fn random_sphere_point(rng: &mut impl Rng) -> SpherePoint {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    SpherePoint::from_unit_sphere([s * phi.cos(), s * phi.sin(), z])
}

/// `Vol(f^{-n}(region))` for `n = 0..=n_max`, by iterating uniform area
/// samples forward. The same samples serve every `n`.
pub fn volume_decay_series(
    map: &RationalMap,
    region: &Region,
    region_index: usize,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Vec<VolumeDecayEstimate> {
    let batches = samples.div_ceil(BATCH);
    let hits: Vec<u64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            let count = BATCH.min(samples - b * BATCH);
            let mut hits = vec![0u64; n_max + 1];
            for _ in 0..count {
                let mut p = random_sphere_point(&mut rng);
                for h in hits.iter_mut() {
                    if region.contains(p) {
                        *h += 1;
                    }
                    p = map.eval(p);
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; n_max + 1],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    hits.iter()
        .enumerate()
        .map(|(n, &h)| {
            let frac = h as f64 / samples as f64;
            VolumeDecayEstimate {
                region_index,
                n,
                epsilon_hat: frac * SPHERE_AREA,
                stderr: SPHERE_AREA * (frac * (1.0 - frac) / samples as f64).sqrt(),
                samples,
            }
        })
        .collect()
}

/// Single-`n` version of [`volume_decay_series`].
pub fn estimate_preimage_volume(
    map: &RationalMap,
    region: &Region,
    n: usize,
    samples: usize,
    seed: u64,
) -> VolumeDecayEstimate {
    volume_decay_series(map, region, 0, n, samples, seed)
        .pop()
        .expect("series has n + 1 entries")
}

/// Birkhoff average of `log |f'|` (spherical metric) along the orbits of
/// `starts` after `burn_in` steps, averaged over the starts.
pub fn lyapunov_estimate(map: &RationalMap, starts: &[SpherePoint], burn_in: usize, length: usize) -> Result<f64> {
    if starts.is_empty() || length == 0 {
        return Err(Error::InvalidConfig("Lyapunov estimate needs orbits of positive length".into()));
    }
    let mut total = 0.0;
    for &s in starts {
        let mut z = map.iterate(s, burn_in);
        let mut sum = 0.0;
        for step in 0..length {
            let l = map.spherical_derivative(z).ln();
            if !l.is_finite() {
                return Err(Error::OrbitEscapedDomain { step: burn_in + step });
            }
            sum += l;
            z = map.eval(z);
        }
        total += sum / length as f64;
    }
    Ok(total / starts.len() as f64)
}

/// `log |multiplier| / period`: the exponent of a periodic orbit.
pub fn periodic_lyapunov(map: &RationalMap, point: SpherePoint, period: usize) -> Result<f64> {
    lyapunov_estimate(map, &[point], 0, period.max(1))
}

/// Fractions of sampled words with tail length beyond `n` below `r`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClaimReport {
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    pub fraction: f64,
}

/// Edges summed beyond the deepest `n` before the geometric remainder.
const CLAIM_LOOK_AHEAD: usize = 12;

/// Claim check for several depths at once. Each trial draws one word; its
/// tails for different `n` are suffix sums of the same edge lengths, so the
/// fractions are comparable across `n`. Lift failures count as misses.
pub fn claim_check(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    ns: &[usize],
    r: f64,
    trials: usize,
) -> Vec<ClaimReport> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let last = n_max + CLAIM_LOOK_AHEAD;
    let per_trial: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let word = sampler.word(t as u64, last + 1);
            let lengths: Vec<f64> = (1..=last)
                .map(|k| tree.edge(&word[..k + 1]).map(|e| e.length()))
                .collect::<Result<_>>()
                .ok()?;
            let remainder = tree.tail_estimate(&word, last - 2, 2).ok()? - lengths[last - 2] - lengths[last - 1];
            let mut tails = Vec::with_capacity(ns.len());
            for &n in ns {
                let sum: f64 = lengths[n..].iter().sum();
                tails.push(sum + remainder.max(0.0));
            }
            Some(tails)
        })
        .collect();
    ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let successes = per_trial
                .iter()
                .filter(|t| t.as_ref().is_some_and(|v| v[i] < r))
                .count();
            let failures = per_trial.iter().filter(|t| t.is_none()).count();
            ClaimReport {
                n,
                r,
                trials,
                successes,
                failures,
                fraction: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub eps: f64,
    pub trials: usize,
    pub samples_used: usize,
    pub boundary_points: usize,
    pub covered_fraction: f64,
}

/// Approximate `z_inf` of a random word: the vertex where the estimated
/// remaining tail first drops below `tol`, capped at `max_depth`.
pub fn sampled_coding_point(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    trial: u64,
    tol: f64,
    max_depth: usize,
) -> Result<SpherePoint> {
    let word = sampler.word(trial, max_depth + 4);
    for m in 1..max_depth {
        if tree.tail_estimate(&word, m, 3)? < tol {
            return tree.vertex(&word[..m + 1]);
        }
    }
    tree.vertex(&word[..max_depth + 1])
}

/// Share of `boundary` points within `eps` of a sampled coding point.
pub fn support_density_check(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    boundary: &[SpherePoint],
    trials: usize,
    eps: f64,
) -> CoverageReport {
    let samples: Vec<SpherePoint> = (0..trials as u64)
        .into_par_iter()
        .filter_map(|t| sampled_coding_point(tree, sampler, t, eps / 10.0, 60).ok())
        .collect();
    let covered = boundary
        .par_iter()
        .filter(|b| samples.iter().any(|s| chordal_distance(*s, **b) < eps))
        .count();
    CoverageReport {
        eps,
        trials,
        samples_used: samples.len(),
        boundary_points: boundary.len(),
        covered_fraction: if boundary.is_empty() {
            0.0
        } else {
            covered as f64 / boundary.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Finite;
    use num_complex::Complex64;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sampler_validation_and_ratio() {
        assert!(BernoulliSampler::new(vec![0.5, 0.4], 1).is_err());
        assert!(BernoulliSampler::new(vec![1.0, 0.0], 1).is_err());
        let s = BernoulliSampler::new(vec![0.7, 0.3], 9).unwrap();
        let w = s.word(3, 12);
        let ratio = s.cylinder_ratio(&w, 2, 9);
        let direct: f64 = w[3..=9].iter().map(|&x| if x == 1 { 0.7 } else { 0.3 }).product();
        assert_eq!(ratio, direct);
        assert!(ratio < (-(7.0) * s.theta()).exp() + 1e-15);
    }

    #[test]
    fn symbol_frequencies_match_weights() {
        let s = BernoulliSampler::new(vec![0.2, 0.5, 0.3], 42).unwrap();
        let n = 100_000;
        let w = s.word(0, n);
        for (k, &p) in s.weights().iter().enumerate() {
            let count = w.iter().filter(|&&x| x as usize == k + 1).count() as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((count - n as f64 * p).abs() < 4.0 * sd);
        }
        // Longer draws of a trial extend shorter ones.
        assert_eq!(s.word(5, 10), s.word(5, 20)[..10]);
    }

    #[test]
    fn volume_identity_cases() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let disc = Region::Disc {
            center: Finite(cx(0.5, 0.0)),
            radius: 0.3,
        };
        let e0 = estimate_preimage_volume(&f, &disc, 0, 100_000, 7);
        assert!((e0.epsilon_hat - disc.area().unwrap()).abs() < 3.0 * e0.stderr);
        let all = volume_decay_series(&f, &Region::Sphere, 0, 5, 2000, 1);
        assert!(all.iter().all(|e| e.epsilon_hat == SPHERE_AREA));
    }

    #[test]
    fn condition_i_examples() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let good = Polyline::resampled(&[Finite(cx(0.5, 0.0)), Finite(cx(0.7, 0.0))], 1e-2).unwrap();
        let rep = check_condition_i(&f, &[good], 10, 0.05).unwrap();
        assert!(rep.pass);
        assert!((rep.min_distance - 1.0 / 1.25f64.sqrt()).abs() < 1e-12);
        let bad = Polyline::resampled(&[Finite(cx(-0.5, 0.0)), Finite(cx(0.5, 0.0))], 1e-2).unwrap();
        let rep = check_condition_i(&f, &[bad], 10, 0.05).unwrap();
        assert!(!rep.pass);
        assert!(rep.min_distance < 1e-12);
    }

    #[test]
    fn lyapunov_on_circle_and_at_sink() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let starts: Vec<SpherePoint> = (0..16)
            .map(|k| Finite(Complex64::from_polar(1.0, 0.3 + k as f64 * 0.37)))
            .collect();
        let l = lyapunov_estimate(&f, &starts, 0, 30).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-6);
        let g = RationalMap::quadratic(cx(0.1, 0.0));
        let p = (1.0 - 0.6f64.sqrt()) / 2.0;
        let l = lyapunov_estimate(&g, &[Finite(cx(p, 0.0))], 0, 10).unwrap();
        assert!((l - (2.0 * p).ln()).abs() < 1e-9);
        assert!(matches!(
            lyapunov_estimate(&f, &[Finite(cx(0.0, 0.0))], 0, 3),
            Err(Error::OrbitEscapedDomain { step: 0 })
        ));
    }

    #[test]
    fn seeds_are_decorrelated() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(1, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
