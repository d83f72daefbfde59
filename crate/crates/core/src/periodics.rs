//! Periodic points on the basin boundary, reached by contracting inverse
//! branches along recurrent words, with invariant access curves of finite
//! length.
//!
//! One trial: draw a word `a`, cut it at a depth `M` where the rest of its
//! branch is shorter than `r/3`, and search connectors `w` for which the
//! periodic word `(a_0..a_M w)` returns near the cut vertex. The branch of
//! `f^N` along that word maps `B(z_M, r)` into itself; its fixed point is a
//! repelling periodic point and the images of the connecting arc accumulate
//! on it.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{classify, primitive_period, OrbitKind};
use crate::diagnostics::BernoulliSampler;
use crate::error::{Error, Result};
use crate::lifting::{certify_contraction, CertifyOptions, ContractionCertificate, InverseBranch, Polyline};
use crate::map::{CriticalData, RationalMap};
use crate::sphere::{chordal_distance, Finite, Infinity, SpherePoint, SPHERE_DIAMETER};
use crate::tree::CodingTree;
use crate::word::{format_symbols, SymbolWord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestParams {
    pub trials: usize,
    pub m_min: usize,
    pub n_max: usize,
    /// Ball radii tried in order.
    pub radii: Vec<f64>,
    /// Access curves stop once the remaining geometric tail is below this.
    pub tail_tol: f64,
    /// Deepest cut tried by the anchor search.
    pub max_anchor_depth: usize,
    /// New words drawn after a slow branch before the trial gives up.
    pub anchor_retries: usize,
    /// Accepted recurrences per radius that may be tried for a certificate.
    pub max_certify_attempts: usize,
    /// Edges summed before the geometric tail estimate.
    pub look_ahead: usize,
    pub certify: CertifyOptionsDef,
    pub dedupe_tol: f64,
    /// Cap on the number of pieces of an access curve.
    pub max_pieces: usize,
}

/// Serializable mirror of [`CertifyOptions`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptionsDef {
    pub samples: usize,
    pub distortion_safety: f64,
    pub margin_floor: f64,
}

impl From<CertifyOptionsDef> for CertifyOptions {
    fn from(c: CertifyOptionsDef) -> Self {
        CertifyOptions {
            samples: c.samples,
            distortion_safety: c.distortion_safety,
            margin_floor: c.margin_floor,
        }
    }
}

impl Default for CertifyOptionsDef {
    fn default() -> Self {
        let c = CertifyOptions::default();
        Self {
            samples: c.samples,
            distortion_safety: c.distortion_safety,
            margin_floor: c.margin_floor,
        }
    }
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self {
            trials: 200,
            m_min: 2,
            n_max: 12,
            radii: vec![0.3, 0.15, 0.075],
            tail_tol: 1e-8,
            max_anchor_depth: 40,
            anchor_retries: 4,
            max_certify_attempts: 6,
            look_ahead: 6,
            certify: CertifyOptionsDef::default(),
            dedupe_tol: 1e-6,
            max_pieces: 400,
        }
    }
}

/// Cut point of a sampled word.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Anchor {
    /// `(a_0..a_M)`.
    pub prefix: Vec<u8>,
    pub point: SpherePoint,
    pub m: usize,
    /// Retries spent on slow branches before this anchor was found.
    pub retries: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecurrenceCandidate {
    pub prefix: Vec<u8>,
    pub connector: Vec<u8>,
    /// `M + |w| + 1`.
    pub n: usize,
    pub m: usize,
    pub anchor: SpherePoint,
    /// `z_{M+N}` of the periodic word.
    pub image: SpherePoint,
    pub radius: f64,
}

impl RecurrenceCandidate {
    /// `(a_0..a_M w)`, one period of the recurrent word.
    pub fn cycle(&self) -> Vec<u8> {
        let mut c = self.prefix.clone();
        c.extend_from_slice(&self.connector);
        c
    }

    pub fn word(&self) -> SymbolWord {
        SymbolWord::periodic(&self.cycle()).expect("valid cycle")
    }

    /// The periodic word written out to `len` symbols.
    pub fn symbols(&self, len: usize) -> Vec<u8> {
        self.cycle().into_iter().cycle().take(len).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicAccessRecord {
    pub point: SpherePoint,
    /// Period `N` of the word; the point's own period divides it.
    pub period: usize,
    pub primitive_period: usize,
    /// Multiplier of the primitive cycle.
    pub multiplier: Complex64,
    pub kind: OrbitKind,
    pub word: SymbolWord,
    pub m: usize,
    pub anchor: SpherePoint,
    /// The seed arc from `z_M` to `z_{M+N}`.
    pub gamma: Polyline,
    /// Seed arc followed by its images under `F_N`.
    pub access_curve: Polyline,
    /// Points of `access_curve` that belong to the seed arc.
    pub seed_points: usize,
    pub gamma_length: f64,
    pub certificate: ContractionCertificate,
    pub boundary_distance: Option<f64>,
    pub trial: usize,
}

impl PeriodicAccessRecord {
    /// `length(gamma) * distortion / (1 - lambda)`.
    pub fn gamma_length_bound(&self) -> f64 {
        self.gamma.length() * self.certificate.distortion_est / (1.0 - self.certificate.lambda_est)
    }

    /// The certified branch `F_N`, rebuilt from the anchor and the end of
    /// the seed arc.
    pub fn inverse_branch(&self, tree: &CodingTree) -> Result<InverseBranch> {
        InverseBranch::new(tree.map(), self.anchor, self.gamma.last(), self.period, tree.options().lift)
    }
}

fn tail_word(sampler: &BernoulliSampler, trial: usize, attempt: usize, len: usize) -> Vec<u8> {
    sampler.word(trial as u64 + ((attempt as u64) << 32), len)
}

/// Draws a word for `trial` and cuts it at the first `M >= m_min` where the
/// estimated tail is below `r/3`. Slow branches are re-drawn up to
/// `params.anchor_retries` times.
pub fn sample_anchor(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    trial: usize,
    r: f64,
    params: &HarvestParams,
) -> Result<Anchor> {
    let mut last_err = None;
    for attempt in 0..=params.anchor_retries {
        let len = params.max_anchor_depth + params.look_ahead + 2;
        let word = tail_word(sampler, trial, attempt, len);
        if r >= SPHERE_DIAMETER {
            let m = params.m_min;
            return Ok(Anchor {
                prefix: word[..m + 1].to_vec(),
                point: tree.vertex(&word[..m + 1])?,
                m,
                retries: attempt,
            });
        }
        let mut found = None;
        for m in params.m_min..=params.max_anchor_depth {
            match tree.tail_estimate(&word, m, params.look_ahead) {
                Ok(t) if t < r / 3.0 => {
                    found = Some(m);
                    break;
                }
                Ok(_) => {}
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        if let Some(m) = found {
            return Ok(Anchor {
                prefix: word[..m + 1].to_vec(),
                point: tree.vertex(&word[..m + 1])?,
                m,
                retries: attempt,
            });
        }
        if last_err.is_none() {
            last_err = Some(Error::SlowConvergence {
                word: format_symbols(&word[..params.max_anchor_depth.min(24)]),
                depth: params.max_anchor_depth,
                ratio: f64::NAN,
            });
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Connectors in breadth-first, lexicographic order, lazily.
struct Connectors {
    d: u8,
    len: usize,
    max_len: usize,
    current: Option<Vec<u8>>,
}

impl Iterator for Connectors {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        if self.len > self.max_len {
            return None;
        }
        let out = self.current.clone()?;
        // Advance as an odometer; roll over to the next length.
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.len += 1;
                self.current = Some(vec![1; self.len]);
                break;
            }
            i -= 1;
            if next[i] < self.d {
                next[i] += 1;
                self.current = Some(next);
                break;
            }
            next[i] = 1;
        }
        Some(out)
    }
}

/// Recurrences in search order, up to `limit` accepted ones. On no success,
/// reports the smallest miss distance.
pub fn recurrence_candidates(
    tree: &CodingTree,
    anchor: &Anchor,
    r: f64,
    n_max: usize,
    look_ahead: usize,
    limit: usize,
) -> Result<Vec<RecurrenceCandidate>> {
    let m = anchor.m;
    if m + 1 > n_max {
        return Err(Error::NoRecurrence {
            n_max,
            closest_miss: f64::INFINITY,
        });
    }
    let connectors = Connectors {
        d: tree.degree() as u8,
        len: 0,
        max_len: n_max - m - 1,
        current: Some(vec![]),
    };
    let mut out = Vec::new();
    let mut closest = f64::INFINITY;
    let mut last_err = None;
    for w in connectors {
        let mut cand = RecurrenceCandidate {
            prefix: anchor.prefix.clone(),
            n: m + w.len() + 1,
            connector: w,
            m,
            anchor: anchor.point,
            image: Infinity,
            radius: r,
        };
        let symbols = cand.symbols(m + cand.n + look_ahead.max(2) + 1);
        let image = match tree.vertex(&symbols[..m + cand.n + 1]) {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let dist = chordal_distance(image, anchor.point);
        closest = closest.min(dist);
        if dist >= r / 3.0 {
            continue;
        }
        match tree.tail_estimate(&symbols, m + cand.n, look_ahead) {
            Ok(t) if t < r / 3.0 => {
                cand.image = image;
                out.push(cand);
                if out.len() >= limit {
                    break;
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    if out.is_empty() {
        return Err(match last_err {
            Some(e @ Error::BranchAmbiguity { .. }) => e,
            _ => Error::NoRecurrence {
                n_max,
                closest_miss: closest,
            },
        });
    }
    Ok(out)
}

/// The first recurrence in breadth-first, lexicographic order.
pub fn find_recurrence(
    tree: &CodingTree,
    anchor: &Anchor,
    r: f64,
    n_max: usize,
    look_ahead: usize,
) -> Result<RecurrenceCandidate> {
    Ok(recurrence_candidates(tree, anchor, r, n_max, look_ahead, 1)?.remove(0))
}

/// Branch of `f^N` for a candidate: `z_M -> z_{M+N}`.
pub fn candidate_branch(tree: &CodingTree, cand: &RecurrenceCandidate) -> Result<InverseBranch> {
    InverseBranch::new(tree.map(), cand.anchor, cand.image, cand.n, tree.options().lift)
}

/// Certifies the candidate's branch on `B(anchor, radius)`.
pub fn certify_candidate(
    branch: &InverseBranch,
    cand: &RecurrenceCandidate,
    crit: &CriticalData,
    opts: &CertifyOptions,
) -> Result<ContractionCertificate> {
    let values = crit.critical_values_up_to(cand.n);
    certify_contraction(branch, cand.anchor, cand.radius, &values, opts)
}

/// Periodic point found by `extract_periodic_point`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub point: SpherePoint,
    pub period: usize,
    pub primitive_period: usize,
    pub multiplier: Complex64,
    pub kind: OrbitKind,
}

/// Fixed point of `F_N` by iteration from the anchor, then Newton on
/// `f^N(z) - z`. Only sources are accepted.
pub fn extract_periodic_point(
    map: &RationalMap,
    branch: &InverseBranch,
    cand: &RecurrenceCandidate,
) -> Result<PeriodicPoint> {
    let mut x = branch.fixed_point(1e-12, 400)?;
    let n = cand.n;
    for _ in 0..30 {
        let Some(step) = newton_step(map, x, n) else { break };
        let next = Finite(x.chart_coordinate_finite() - step);
        let moved = chordal_distance(next, x);
        x = next;
        let off = chordal_distance(x, cand.anchor);
        if off > cand.radius {
            return Err(Error::NewtonEscapedBall {
                distance: off,
                radius: cand.radius,
            });
        }
        if moved < 1e-16 {
            break;
        }
    }
    let residual = chordal_distance(map.iterate(x, n), x);
    if residual > 1e-9 {
        return Err(Error::NoConvergence {
            worst_residual: residual,
        });
    }
    let primitive = primitive_period(map, x, n, 1e-8);
    let mut orbit = Vec::with_capacity(primitive);
    let mut z = x;
    for _ in 0..primitive {
        orbit.push(z);
        z = map.eval(z);
    }
    let multiplier = map.orbit_multiplier(&orbit);
    let kind = classify(multiplier);
    if kind != OrbitKind::Repelling {
        return Err(Error::NotContracting {
            detail: format!("fixed point {x} is {} (multiplier {multiplier})", kind.as_str()),
        });
    }
    Ok(PeriodicPoint {
        point: x,
        period: n,
        primitive_period: primitive,
        multiplier,
        kind,
    })
}

trait FiniteChart {
    fn chart_coordinate_finite(&self) -> Complex64;
}

impl FiniteChart for SpherePoint {
    fn chart_coordinate_finite(&self) -> Complex64 {
        self.finite().unwrap_or(Complex64::new(f64::INFINITY, 0.0))
    }
}

/// Newton step for `f^n(z) - z` in the finite chart, if defined there.
fn newton_step(map: &RationalMap, x: SpherePoint, n: usize) -> Option<Complex64> {
    let z = x.finite()?;
    let mut p = x;
    let mut deriv = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        deriv *= map.derivative(p).ok()?;
        p = map.eval(p);
    }
    let g = p.finite()? - z;
    let dg = deriv - 1.0;
    if dg.norm() == 0.0 {
        return None;
    }
    let step = g / dg;
    step.re.is_finite().then_some(step)
}

/// Seed arc `gamma = gamma_{M+1..M+N}` of the periodic word and its images
/// under `F_N` until the remaining tail is below `tail_tol`.
pub fn build_access_curve(
    tree: &CodingTree,
    cand: &RecurrenceCandidate,
    branch: &InverseBranch,
    cert: &ContractionCertificate,
    tail_tol: f64,
    max_pieces: usize,
) -> Result<(Polyline, Polyline, usize, f64)> {
    let symbols = cand.symbols(cand.m + cand.n + 1);
    let edges: Vec<Polyline> = (cand.m + 1..=cand.m + cand.n)
        .map(|k| tree.edge(&symbols[..k + 1]).map(|e| (*e).clone()))
        .collect::<Result<_>>()?;
    let gamma = Polyline::concat(&edges)?;
    let lambda = cert.lambda_est;
    let remainder = |len: f64| len * lambda / (1.0 - lambda);
    let mut pieces = vec![gamma.clone()];
    let min_points = tree.options().min_edge_points;
    let max_step = tree.options().lift.max_step;
    while remainder(pieces.last().unwrap().length()) >= tail_tol {
        if pieces.len() >= max_pieces {
            return Err(Error::TailBudgetExceeded {
                remaining: remainder(pieces.last().unwrap().length()),
                pieces: pieces.len(),
            });
        }
        let last = pieces.last().unwrap();
        let next = branch.apply_polyline(last, last.last())?;
        pieces.push(next.decimated(min_points, max_step));
    }
    let total: f64 = pieces.iter().map(|p| p.length()).sum();
    let gamma_length = total + remainder(pieces.last().unwrap().length());
    let seed_points = gamma.len();
    let access = Polyline::concat(&pieces)?;
    Ok((gamma, access, seed_points, gamma_length))
}

/// Why a trial produced no record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub radius: f64,
    pub stage: String,
    pub message: String,
}

/// One harvest trial: tries the radius schedule and, per radius, accepted
/// recurrences in search order until one certifies.
pub fn run_trial(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    crit: &CriticalData,
    params: &HarvestParams,
    trial: usize,
) -> (Option<PeriodicAccessRecord>, Vec<TrialFailure>, usize) {
    let mut failures = Vec::new();
    let mut slow_retries = 0;
    let fail = |radius: f64, stage: &str, e: Error| TrialFailure {
        trial,
        radius,
        stage: stage.into(),
        message: e.to_string(),
    };
    let certify_opts: CertifyOptions = params.certify.into();
    for &r in &params.radii {
        let anchor = match sample_anchor(tree, sampler, trial, r, params) {
            Ok(a) => a,
            Err(e) => {
                slow_retries += params.anchor_retries;
                failures.push(fail(r, "anchor", e));
                continue;
            }
        };
        slow_retries += anchor.retries;
        let candidates = match recurrence_candidates(
            tree,
            &anchor,
            r,
            params.n_max,
            params.look_ahead,
            params.max_certify_attempts,
        ) {
            Ok(c) => c,
            Err(e) => {
                failures.push(fail(r, "recurrence", e));
                continue;
            }
        };
        for cand in candidates {
            let attempt = || -> std::result::Result<PeriodicAccessRecord, (&'static str, Error)> {
                let branch = candidate_branch(tree, &cand).map_err(|e| ("branch", e))?;
                let cert = certify_candidate(&branch, &cand, crit, &certify_opts).map_err(|e| ("certify", e))?;
                let pp = extract_periodic_point(tree.map(), &branch, &cand).map_err(|e| ("extract", e))?;
                let (gamma, access, seed_points, gamma_length) =
                    build_access_curve(tree, &cand, &branch, &cert, params.tail_tol, params.max_pieces)
                        .map_err(|e| ("access", e))?;
                Ok(PeriodicAccessRecord {
                    point: pp.point,
                    period: pp.period,
                    primitive_period: pp.primitive_period,
                    multiplier: pp.multiplier,
                    kind: pp.kind,
                    word: cand.word(),
                    m: cand.m,
                    anchor: cand.anchor,
                    gamma,
                    access_curve: access,
                    seed_points,
                    gamma_length,
                    certificate: cert,
                    boundary_distance: None,
                    trial,
                })
            };
            match attempt() {
                Ok(rec) => return (Some(rec), failures, slow_retries),
                Err((stage, e)) => failures.push(fail(r, stage, e)),
            }
        }
    }
    (None, failures, slow_retries)
}

/// Covering statistics of harvested points over a boundary sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityReport {
    pub boundary_points: usize,
    pub covering_radius: f64,
    pub mean_distance: f64,
    /// Per boundary point, distance to the nearest harvested point.
    pub distances: Vec<f64>,
}

impl DensityReport {
    pub fn compute(boundary: &[SpherePoint], points: &[SpherePoint]) -> Self {
        let distances: Vec<f64> = boundary
            .par_iter()
            .map(|b| {
                points
                    .iter()
                    .map(|p| chordal_distance(*p, *b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let covering_radius = distances.iter().copied().fold(0.0, f64::max);
        let mean_distance = distances.iter().sum::<f64>() / distances.len().max(1) as f64;
        Self {
            boundary_points: boundary.len(),
            covering_radius,
            mean_distance,
            distances,
        }
    }
}

/// Sets each record's distance to the nearest boundary point.
pub fn attach_boundary_distances(records: &mut [PeriodicAccessRecord], boundary: &[SpherePoint]) {
    records.par_iter_mut().for_each(|rec| {
        rec.boundary_distance = Some(
            boundary
                .iter()
                .map(|q| chordal_distance(*q, rec.point))
                .fold(f64::INFINITY, f64::min),
        );
    });
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarvestReport {
    pub records: Vec<PeriodicAccessRecord>,
    pub failures: Vec<TrialFailure>,
    pub slow_retries: usize,
    pub duplicates: usize,
    pub density: Option<DensityReport>,
}

/// Edges of words up to this length are shared between trial trees.
const SHARED_WORD_LEN: usize = 8;

/// Runs `params.trials` trials, deduplicates the periodic points and, when a
/// boundary sample is given, measures how densely they cover it.
pub fn harvest(
    tree: &CodingTree,
    sampler: &BernoulliSampler,
    params: &HarvestParams,
    boundary: Option<&[SpherePoint]>,
) -> Result<HarvestReport> {
    if params.trials == 0 {
        return Err(Error::NoRecords { failures: 0 });
    }
    let crit = tree.map().critical_points(params.n_max + 2)?;
    // Warm the shared shallow levels once so every trial reuses them.
    for len in 1..=SHARED_WORD_LEN.min(tree.leaf_length().max(1)) {
        let d = tree.degree() as u8;
        let mut w = vec![1u8; len];
        loop {
            tree.edge(&w)?;
            let mut i = len;
            while i > 0 && w[i - 1] == d {
                w[i - 1] = 1;
                i -= 1;
            }
            if i == 0 {
                break;
            }
            w[i - 1] += 1;
        }
    }
    let outcomes: Vec<_> = (0..params.trials)
        .into_par_iter()
        .map(|t| {
            let scratch = tree.scratch(SHARED_WORD_LEN);
            run_trial(&scratch, sampler, &crit, params, t)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut slow_retries = 0;
    for (rec, fails, slow) in outcomes {
        records.extend(rec);
        failures.extend(fails);
        slow_retries += slow;
    }
    let found = records.len();
    let mut unique: Vec<PeriodicAccessRecord> = Vec::new();
    for rec in records {
        let dup = unique.iter().any(|u| {
            u.primitive_period == rec.primitive_period && chordal_distance(u.point, rec.point) < params.dedupe_tol
        });
        if !dup {
            unique.push(rec);
        }
    }
    let duplicates = found - unique.len();
    unique.sort_by(|a, b| {
        let key = |r: &PeriodicAccessRecord| {
            let z = r.point.finite().unwrap_or(Complex64::new(f64::INFINITY, 0.0));
            (r.primitive_period, z.re, z.im)
        };
        let (pa, ra, ia) = key(a);
        let (pb, rb, ib) = key(b);
        pa.cmp(&pb).then(ra.total_cmp(&rb)).then(ia.total_cmp(&ib))
    });
    if unique.is_empty() {
        return Err(Error::NoRecords {
            failures: failures.len(),
        });
    }
    let density = boundary.map(|b| {
        attach_boundary_distances(&mut unique, b);
        let pts: Vec<SpherePoint> = unique.iter().map(|r| r.point).collect();
        DensityReport::compute(b, &pts)
    });
    Ok(HarvestReport {
        records: unique,
        failures,
        slow_retries,
        duplicates,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{BuildMode, TreeOptions};

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(re: f64, im: f64) -> SpherePoint {
        Finite(cx(re, im))
    }

    fn z2_tree() -> CodingTree {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let r0 = 0.5f64;
        let r1 = r0.sqrt();
        let spiral: Vec<SpherePoint> = (0..=64)
            .map(|k| {
                let t = k as f64 / 64.0;
                Finite(Complex64::from_polar(r0.powf(1.0 - t) * r1.powf(t), std::f64::consts::PI * t))
            })
            .collect();
        CodingTree::build(&f, p(r0, 0.0), &[vec![p(r0, 0.0), p(r1, 0.0)], spiral], 4, &BuildMode::Full, TreeOptions::default())
            .unwrap()
    }

    #[test]
    fn connectors_are_breadth_first_and_lexicographic() {
        let c: Vec<String> = Connectors {
            d: 2,
            len: 0,
            max_len: 2,
            current: Some(vec![]),
        }
        .map(|w| format_symbols(&w))
        .collect();
        assert_eq!(c, vec!["", "1", "2", "11", "12", "21", "22"]);
    }

    #[test]
    fn anchor_is_near_the_unit_circle() {
        let tree = z2_tree();
        let s = BernoulliSampler::uniform(2, 11).unwrap();
        let params = HarvestParams::default();
        for trial in 0..10 {
            let a = sample_anchor(&tree, &s, trial, 0.3, &params).unwrap();
            let m = a.point.finite().unwrap().norm();
            assert!(m > 0.9 && m < 1.0, "{m}");
            assert!(a.m >= params.m_min);
        }
        let vacuous = sample_anchor(&tree, &s, 0, 2.0, &params).unwrap();
        assert_eq!(vacuous.m, params.m_min);
    }

    #[test]
    fn large_radius_accepts_the_first_connector() {
        let tree = z2_tree();
        let s = BernoulliSampler::uniform(2, 3).unwrap();
        let params = HarvestParams::default();
        let a = sample_anchor(&tree, &s, 0, 2.0, &params).unwrap();
        let c = find_recurrence(&tree, &a, 2.0 * 3.0, 12, 6).unwrap();
        assert!(c.connector.is_empty());
        assert_eq!(c.n, a.m + 1);
    }

    #[test]
    fn principal_fixed_point_of_z_squared() {
        let tree = z2_tree();
        // All-ones prefix: the branch fixing 1.
        let prefix = vec![1u8; 5];
        let anchor = Anchor {
            point: tree.vertex(&prefix).unwrap(),
            prefix,
            m: 4,
            retries: 0,
        };
        let cand = find_recurrence(&tree, &anchor, 0.3, 12, 6).unwrap();
        let branch = candidate_branch(&tree, &cand).unwrap();
        let crit = tree.map().critical_points(16).unwrap();
        let cert = certify_candidate(&branch, &cand, &crit, &CertifyOptions::default()).unwrap();
        let pp = extract_periodic_point(tree.map(), &branch, &cand).unwrap();
        assert!(chordal_distance(pp.point, p(1.0, 0.0)) < 1e-12);
        assert_eq!(pp.primitive_period, 1);
        assert!((pp.multiplier - 2.0).norm() < 1e-10);
        let (gamma, access, seed, len) = build_access_curve(&tree, &cand, &branch, &cert, 1e-8, 400).unwrap();
        assert!(len <= gamma.length() * cert.distortion_est / (1.0 - cert.lambda_est));
        assert!(chordal_distance(access.last(), pp.point) < 1e-6);
        assert_eq!(seed, gamma.len());
        // Budget case: a tolerance above the first remainder keeps gamma alone.
        let (_, alone, _, _) = build_access_curve(&tree, &cand, &branch, &cert, gamma.length(), 400).unwrap();
        assert_eq!(alone.len(), gamma.len());
    }

    #[test]
    fn no_recurrence_with_zero_budget() {
        let tree = z2_tree();
        let s = BernoulliSampler::uniform(2, 3).unwrap();
        let a = sample_anchor(&tree, &s, 0, 0.3, &HarvestParams::default()).unwrap();
        assert!(matches!(find_recurrence(&tree, &a, 0.3, 0, 6), Err(Error::NoRecurrence { .. })));
    }

    #[test]
    fn small_harvest_lands_on_roots_of_unity() {
        let tree = z2_tree();
        let s = BernoulliSampler::uniform(2, 5).unwrap();
        let params = HarvestParams {
            trials: 12,
            ..HarvestParams::default()
        };
        let report = harvest(&tree, &s, &params, None).unwrap();
        assert!(!report.records.is_empty());
        for r in &report.records {
            let z = r.point.finite().unwrap();
            let q = 2u32.pow(r.period as u32) - 1;
            assert!((z.powu(q) - 1.0).norm() < 1e-8);
            assert!(r.multiplier.norm() > 1.0);
        }
        let none = HarvestParams {
            trials: 0,
            ..HarvestParams::default()
        };
        assert!(matches!(harvest(&tree, &s, &none, None), Err(Error::NoRecords { .. })));
    }
}
