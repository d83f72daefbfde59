//! Preimages, curve lifting with branch tracking, and numerically
//! certified inverse branches of iterates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::RationalMap;
use crate::roots::{self, poly_derivative, poly_eval};
use crate::sphere::{
    chart_midpoint, chordal_circle, chordal_distance, distance_to_segment, lerp, Finite, Infinity,
    SpherePoint,
};

/// Chordal separation below which two roots of a fiber are considered one
/// root of higher multiplicity.
pub const MULTIPLE_ROOT_TOL: f64 = 1e-7;

/// Required chordal accuracy of a computed preimage.
pub const PREIMAGE_RESIDUAL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LiftOptions {
    /// Chosen preimage must be this many times closer than any competitor.
    pub safety_ratio: f64,
    pub max_bisections: usize,
    /// Largest chordal step allowed in a lifted polyline.
    pub max_step: f64,
    /// Allowed gap between `f(start)` and the first curve point.
    pub start_tol: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            safety_ratio: 3.0,
            max_bisections: 20,
            max_step: 1e-2,
            start_tol: 1e-8,
        }
    }
}

/// An ordered chain of sphere points joined by short chart segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<SpherePoint>,
    length: f64,
}

impl Polyline {
    /// Builds a polyline, dropping repeated consecutive points.
    pub fn new(points: Vec<SpherePoint>) -> Result<Self> {
        let mut pts: Vec<SpherePoint> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q| *q != p) {
                pts.push(p);
            }
        }
        if pts.is_empty() {
            return Err(Error::InvalidTree("empty polyline".into()));
        }
        let length = pts.windows(2).map(|w| chordal_distance(w[0], w[1])).sum();
        Ok(Self { points: pts, length })
    }

    /// A single point (a degenerate curve).
    pub fn point(p: SpherePoint) -> Self {
        Self {
            points: vec![p],
            length: 0.0,
        }
    }

    /// Subdivides every segment so that no chordal step exceeds `max_step`.
    pub fn resampled(vertices: &[SpherePoint], max_step: f64) -> Result<Self> {
        let mut out = Vec::new();
        for w in vertices.windows(2) {
            let n = (chordal_distance(w[0], w[1]) / max_step).ceil().max(1.0) as usize;
            for k in 0..n {
                out.push(lerp(w[0], w[1], k as f64 / n as f64));
            }
        }
        if let Some(last) = vertices.last() {
            out.push(*last);
        }
        // Interpolation in the chart can still stretch a step near the
        // chart boundary; one refinement pass settles it.
        let mut refined = Vec::with_capacity(out.len());
        for w in out.windows(2) {
            refined.push(w[0]);
            let d = chordal_distance(w[0], w[1]);
            if d > max_step {
                let n = (d / max_step).ceil() as usize;
                for k in 1..n {
                    refined.push(lerp(w[0], w[1], k as f64 / n as f64));
                }
            }
        }
        if let Some(last) = out.last() {
            refined.push(*last);
        }
        Self::new(refined)
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> SpherePoint {
        self.points[0]
    }

    pub fn last(&self) -> SpherePoint {
        *self.points.last().expect("polyline is nonempty")
    }

    /// Total chordal length.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| chordal_distance(w[0], w[1]))
            .fold(0.0, f64::max)
    }

    /// Chordal distance from `p` to the polyline.
    pub fn distance_to(&self, p: SpherePoint) -> f64 {
        if self.points.len() == 1 {
            return chordal_distance(p, self.points[0]);
        }
        self.points
            .windows(2)
            .map(|w| distance_to_segment(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Joins polylines end to start; coincident joints are merged.
    pub fn concat(parts: &[Polyline]) -> Result<Self> {
        let mut pts = Vec::new();
        for part in parts {
            pts.extend_from_slice(&part.points);
        }
        Self::new(pts)
    }

    /// Keeps every other interior point while the result has at least
    /// `min_points` points and steps stay below `max_step`.
    pub fn decimated(&self, min_points: usize, max_step: f64) -> Self {
        let mut current = self.clone();
        while current.points.len() >= 2 * min_points {
            let n = current.points.len();
            let mut pts: Vec<SpherePoint> = current.points.iter().step_by(2).copied().collect();
            if (n - 1) % 2 == 1 {
                pts.push(current.points[n - 1]);
            }
            let candidate = Polyline::new(pts).expect("nonempty");
            if candidate.max_step() > max_step {
                break;
            }
            current = candidate;
        }
        current
    }
}

/// One point of a fiber `f^{-1}(z)` with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preimage {
    pub point: SpherePoint,
    pub multiplicity: usize,
}

#[derive(Clone, Debug)]
pub struct Fiber {
    pub value: SpherePoint,
    pub preimages: Vec<Preimage>,
}

impl Fiber {
    pub fn is_degenerate(&self) -> bool {
        self.preimages.iter().any(|p| p.multiplicity > 1)
    }

    /// All `d` preimages listed with multiplicity.
    pub fn with_multiplicity(&self) -> Vec<SpherePoint> {
        self.preimages
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.point, p.multiplicity))
            .collect()
    }

    /// The distinct preimages, or `DegenerateFiber` when `value` is a
    /// critical value.
    pub fn simple(&self) -> Result<Vec<SpherePoint>> {
        if let Some(p) = self.preimages.iter().find(|p| p.multiplicity > 1) {
            return Err(Error::DegenerateFiber {
                point: p.point,
                multiplicity: p.multiplicity,
            });
        }
        Ok(self.preimages.iter().map(|p| p.point).collect())
    }
}

/// The `d` solutions of `f(w) = z` counted with multiplicity, grouped.
pub fn preimages(map: &RationalMap, z: SpherePoint) -> Result<Fiber> {
    let raw = fiber_points(map, z, None)?;
    let mut grouped: Vec<Preimage> = Vec::new();
    for p in raw {
        match grouped
            .iter_mut()
            .find(|g| chordal_distance(g.point, p) < MULTIPLE_ROOT_TOL)
        {
            Some(g) => {
                // Average the cluster in the chart to undo the sqrt(eps)
                // splitting of a multiple root.
                let m = g.multiplicity as f64;
                g.point = lerp(g.point, p, 1.0 / (m + 1.0));
                g.multiplicity += 1;
            }
            None => grouped.push(Preimage {
                point: p,
                multiplicity: 1,
            }),
        }
    }
    Ok(Fiber {
        value: z,
        preimages: grouped,
    })
}

/// Raw preimages with multiplicity, optionally warm-started.
pub(crate) fn fiber_points(
    map: &RationalMap,
    z: SpherePoint,
    warm: Option<&[SpherePoint]>,
) -> Result<Vec<SpherePoint>> {
    let d = map.degree();
    let mut e = map.fiber_polynomial(z);
    let scale = e.iter().map(|c| c.norm()).fold(0.0, f64::max);
    while e.len() > 1 && e.last().is_some_and(|c| c.norm() <= 1e-14 * scale) {
        e.pop();
    }
    let finite_degree = e.len() - 1;
    let mut out: Vec<SpherePoint> = Vec::with_capacity(d);
    if finite_degree >= 1 {
        let warm_finite: Option<Vec<_>> = warm.map(|w| w.iter().filter_map(|p| p.finite()).collect());
        let roots = roots::poly_roots_from(&e, warm_finite.as_deref())?;
        let de = poly_derivative(&e);
        for mut r in roots {
            // A final Newton step on the chart equation tightens roots
            // that came out of the closed-form quadratic.
            let p = poly_eval(&e, r);
            let dp = poly_eval(&de, r);
            if dp.norm() > 0.0 {
                let step = p / dp;
                if step.norm() < 1e-6 * (1.0 + r.norm()) {
                    let cand = r - step;
                    if poly_eval(&e, cand).norm() < p.norm() {
                        r = cand;
                    }
                }
            }
            out.push(SpherePoint::new(r));
        }
    }
    out.extend(std::iter::repeat_n(Infinity, d - finite_degree));
    let worst = out
        .iter()
        .map(|w| chordal_distance(map.eval(*w), z))
        .fold(0.0, f64::max);
    if worst > PREIMAGE_RESIDUAL {
        return Err(Error::NoConvergence {
            worst_residual: worst,
        });
    }
    Ok(out)
}

struct Pick {
    point: SpherePoint,
    nearest: f64,
    runner_up: f64,
}

fn pick_nearest(fiber: &[SpherePoint], from: SpherePoint) -> Pick {
    let mut best = (f64::INFINITY, fiber[0]);
    let mut second = f64::INFINITY;
    for &w in fiber {
        let dist = chordal_distance(w, from);
        if dist < best.0 {
            second = best.0;
            best = (dist, w);
        } else if dist < second {
            second = dist;
        }
    }
    Pick {
        point: best.1,
        nearest: best.0,
        runner_up: second,
    }
}

/// Lifts `curve` through `f` starting at (the exact preimage nearest to)
/// `start`. Every point of the result maps onto the curve; points are
/// inserted where the branch choice or the step size needs it.
pub fn lift_curve(
    map: &RationalMap,
    curve: &Polyline,
    start: SpherePoint,
    opts: &LiftOptions,
) -> Result<Polyline> {
    let gap = chordal_distance(map.eval(start), curve.first());
    if gap > opts.start_tol {
        return Err(Error::StartMismatch { gap });
    }
    let fiber0 = fiber_points(map, curve.first(), None)?;
    let pick = pick_nearest(&fiber0, start);
    if pick.runner_up < MULTIPLE_ROOT_TOL {
        return Err(Error::DegenerateFiber {
            point: pick.point,
            multiplicity: fiber0
                .iter()
                .filter(|w| chordal_distance(**w, pick.point) < MULTIPLE_ROOT_TOL)
                .count(),
        });
    }
    let mut lifted = Vec::with_capacity(curve.len());
    lifted.push(pick.point);
    let mut prev = pick.point;
    let mut prev_fiber = fiber0;
    let pts = curve.points();
    for k in 1..pts.len() {
        let mut base = pts[k - 1];
        let mut pending = vec![pts[k]];
        while let Some(&target) = pending.last() {
            let fiber = fiber_points(map, target, Some(&prev_fiber))?;
            let pick = pick_nearest(&fiber, prev);
            let safe = opts.safety_ratio * pick.nearest <= pick.runner_up;
            let short = pick.nearest <= opts.max_step;
            let exhausted = pending.len() > opts.max_bisections;
            if safe && (short || exhausted) {
                lifted.push(pick.point);
                prev = pick.point;
                prev_fiber = fiber;
                base = target;
                pending.pop();
            } else if exhausted {
                return Err(Error::BranchAmbiguity {
                    word: None,
                    detail: format!(
                        "near {target}: nearest preimage {:.3e}, competitor {:.3e}",
                        pick.nearest, pick.runner_up
                    ),
                });
            } else {
                pending.push(chart_midpoint(base, target));
            }
        }
    }
    Polyline::new(lifted)
}

/// A branch `F_N` of `f^{-N}` fixed by one pair `F_N(anchor) = anchor_image`
/// and continued along segments from the anchor.
#[derive(Clone, Debug)]
pub struct InverseBranch {
    map: RationalMap,
    anchor: SpherePoint,
    anchor_image: SpherePoint,
    depth: usize,
    opts: LiftOptions,
}

impl InverseBranch {
    pub fn new(
        map: &RationalMap,
        anchor: SpherePoint,
        anchor_image: SpherePoint,
        depth: usize,
        opts: LiftOptions,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidWord("inverse branch needs depth >= 1".into()));
        }
        let gap = chordal_distance(map.iterate(anchor_image, depth), anchor);
        if gap > 1e-8 {
            return Err(Error::StartMismatch { gap });
        }
        Ok(Self {
            map: map.clone(),
            anchor,
            anchor_image,
            depth,
            opts,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn anchor(&self) -> SpherePoint {
        self.anchor
    }

    pub fn anchor_image(&self) -> SpherePoint {
        self.anchor_image
    }

    pub fn map(&self) -> &RationalMap {
        &self.map
    }

    /// `F_N(target)`, continuing the branch along the segment from the
    /// anchor.
    pub fn apply(&self, target: SpherePoint) -> Result<SpherePoint> {
        if chordal_distance(target, self.anchor) == 0.0 {
            return Ok(self.anchor_image);
        }
        let segment = Polyline::resampled(&[self.anchor, target], self.opts.max_step)?;
        Ok(self.apply_polyline(&segment, self.anchor_image)?.last())
    }

    /// Lifts `curve` through `f^N` by `N` single lifts; `start_image` must
    /// be the branch value at the curve's first point.
    pub fn apply_polyline(&self, curve: &Polyline, start_image: SpherePoint) -> Result<Polyline> {
        // starts[k] = f^k(start_image); level j lifts from starts[N - j].
        let mut starts = Vec::with_capacity(self.depth);
        let mut s = start_image;
        for _ in 0..self.depth {
            starts.push(s);
            s = self.map.eval(s);
        }
        let mut current = curve.clone();
        for level in (0..self.depth).rev() {
            current = lift_curve(&self.map, &current, starts[level], &self.opts)?;
        }
        Ok(current)
    }

    /// Spherical derivative of the branch at the point whose image is `y`.
    pub fn spherical_derivative_at_image(&self, y: SpherePoint) -> f64 {
        let mut prod = 1.0;
        let mut p = y;
        for _ in 0..self.depth {
            prod *= self.map.spherical_derivative(p);
            p = self.map.eval(p);
        }
        1.0 / prod
    }

    /// Fixed point of the branch by iteration from the anchor, stopping when
    /// consecutive iterates are closer than `tol`.
    pub fn fixed_point(&self, tol: f64, max_iters: usize) -> Result<SpherePoint> {
        let mut x = self.anchor_image;
        for _ in 0..max_iters {
            let next = self.apply(x)?;
            if chordal_distance(next, x) < tol {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::NotContracting {
            detail: format!("iteration did not settle below {tol:e} in {max_iters} steps"),
        })
    }
}

/// Numerical evidence that an inverse branch maps a ball into itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub center: SpherePoint,
    pub radius: f64,
    pub depth: usize,
    pub image_samples: Vec<SpherePoint>,
    pub lambda_est: f64,
    pub distortion_est: f64,
    /// `radius - max chordal(center, image)`.
    pub margin: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub samples: usize,
    /// Required `lambda_est * distortion_safety < 1`.
    pub distortion_safety: f64,
    /// Images must land in `B(center, radius * (1 - margin_floor))`.
    pub margin_floor: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 32,
            distortion_safety: 1.5,
            margin_floor: 0.1,
        }
    }
}

/// Samples `F_N` on the boundary circle of `B(center, radius)` plus the
/// center. `critical_values` are the critical values of `f^N`; the ball
/// must stay clear of them.
pub fn certify_contraction(
    branch: &InverseBranch,
    center: SpherePoint,
    radius: f64,
    critical_values: &[SpherePoint],
    opts: &CertifyOptions,
) -> Result<ContractionCertificate> {
    let clearance = critical_values
        .iter()
        .map(|c| chordal_distance(*c, center))
        .fold(f64::INFINITY, f64::min);
    if clearance <= radius {
        return Err(Error::PostcriticalViolation {
            center,
            radius,
            distance: clearance,
        });
    }
    let mut domain = chordal_circle(center, radius, opts.samples.max(3));
    domain.push(center);
    let images: Vec<SpherePoint> = domain
        .par_iter()
        .map(|&x| branch.apply(x))
        .collect::<Result<_>>()?;
    let derivs: Vec<f64> = images
        .iter()
        .map(|&y| branch.spherical_derivative_at_image(y))
        .collect();
    let lambda_est = derivs.iter().copied().fold(0.0, f64::max);
    let min_d = derivs.iter().copied().fold(f64::INFINITY, f64::min);
    let distortion_est = if min_d > 0.0 { lambda_est / min_d } else { f64::INFINITY };
    let (worst_idx, worst_dist) = images
        .iter()
        .map(|&y| chordal_distance(y, center))
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    let margin = radius - worst_dist;
    if margin < opts.margin_floor * radius {
        return Err(Error::NotContracting {
            detail: format!(
                "image of {} lands at distance {worst_dist:.4e} from the center (radius {radius})",
                domain[worst_idx]
            ),
        });
    }
    if lambda_est * opts.distortion_safety >= 1.0 {
        return Err(Error::NotContracting {
            detail: format!("lambda_est {lambda_est:.4} too large for safety {}", opts.distortion_safety),
        });
    }
    Ok(ContractionCertificate {
        center,
        radius,
        depth: branch.depth(),
        image_samples: images,
        lambda_est,
        distortion_est,
        margin,
    })
}

/// Maximum pointwise residual of `f(lifted) ~ curve`, measured as distance
/// from the image of each lifted point to the curve.
pub fn commutation_residual(map: &RationalMap, lifted: &Polyline, curve: &Polyline) -> f64 {
    lifted
        .points()
        .iter()
        .map(|&p| curve.distance_to(map.eval(p)))
        .fold(0.0, f64::max)
}

#[allow(dead_code)]
pub(crate) fn finite_or_panic(p: SpherePoint) -> num_complex::Complex64 {
    match p {
        Finite(z) => z,
        Infinity => panic!("expected a finite point"),
    }
}
