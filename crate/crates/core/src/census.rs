//! Ground truth for the rest of the crate: periodic orbits found by root
//! finding, their classification, and rasters of basins of attraction.

use std::collections::VecDeque;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::RationalMap;
use crate::pixmap::{label_color, Pixmap, BLACK};
use crate::roots::{aberth, circle_guesses, sort_lexicographic, AberthOptions};
use crate::sphere::{ball_point, chordal_circle, chordal_distance, metric_factor, Finite, Infinity, SpherePoint};

/// Largest `d^n` the census will solve for.
pub const CENSUS_DEGREE_LIMIT: u64 = 10_000;

/// Half-width of the band around `|multiplier| = 1` treated as neutral.
pub const KIND_BAND: f64 = 1e-8;

/// Roots closer than this (chordal) are one periodic point.
pub const MERGE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitKind {
    Attracting,
    Repelling,
    Parabolic,
    Indifferent,
}

impl OrbitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrbitKind::Attracting => "attracting",
            OrbitKind::Repelling => "repelling",
            OrbitKind::Parabolic => "parabolic",
            OrbitKind::Indifferent => "indifferent",
        }
    }
}

/// Kind of a cycle from its multiplier.
pub fn classify(multiplier: Complex64) -> OrbitKind {
    let r = multiplier.norm();
    if r < 1.0 - KIND_BAND {
        OrbitKind::Attracting
    } else if r > 1.0 + KIND_BAND {
        OrbitKind::Repelling
    } else if root_of_unity_order(multiplier, 64).is_some() {
        OrbitKind::Parabolic
    } else {
        OrbitKind::Indifferent
    }
}

/// Smallest `q <= max_order` with `m^q = 1` to within `KIND_BAND`.
pub fn root_of_unity_order(m: Complex64, max_order: u32) -> Option<u32> {
    (1..=max_order).find(|&q| (m.powu(q) - 1.0).norm() < KIND_BAND * q as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    pub period: usize,
    pub points: Vec<SpherePoint>,
    pub multiplier: Complex64,
    pub kind: OrbitKind,
}

impl PeriodicOrbitRecord {
    /// Builds the record of the cycle through `point` with the given primitive
    /// period.
    pub fn from_point(map: &RationalMap, point: SpherePoint, period: usize) -> Self {
        let mut points = Vec::with_capacity(period);
        let mut z = point;
        for _ in 0..period {
            points.push(z);
            z = map.eval(z);
        }
        let multiplier = map.orbit_multiplier(&points);
        Self {
            period,
            points,
            multiplier,
            kind: classify(multiplier),
        }
    }

    pub fn contains(&self, p: SpherePoint, tol: f64) -> bool {
        self.points.iter().any(|q| chordal_distance(*q, p) < tol)
    }
}

/// Newton quotient of `X_n(z) - z Y_n(z)`, where `[X_n : Y_n]` is the
/// homogeneous `n`-th iterate. Rescaling the carried tuple each step keeps
/// it in range without changing the quotient.
fn fixed_point_quotient(map: &RationalMap, n: usize, z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let mut h = [z, one, one, Complex64::new(0.0, 0.0)];
    for _ in 0..n {
        let s = h[0].norm().max(h[1].norm());
        if s > 0.0 && s.is_finite() {
            for v in h.iter_mut() {
                *v /= s;
            }
        }
        h = map.homogeneous_step(h);
    }
    let value = h[0] - z * h[1];
    let deriv = h[2] - h[1] - z * h[3];
    value / deriv
}

/// Radius beyond which a polynomial's orbits escape to infinity.
pub fn escape_radius(map: &RationalMap) -> Option<f64> {
    if !map.is_polynomial() {
        return None;
    }
    let c = map.numerator();
    let q0 = map.denominator()[0];
    let lead = (c[c.len() - 1] / q0).norm();
    let rest: f64 = c[..c.len() - 1].iter().map(|a| (a / q0).norm()).sum();
    Some(((rest + 2.0) / lead).max(1.0))
}

/// All fixed points of `f^n` on the sphere, clustered at `MERGE_TOL`, in
/// lexicographic order with infinity last.
pub fn fixed_points_of_iterate(map: &RationalMap, n: usize) -> Result<Vec<SpherePoint>> {
    let n = n.max(1);
    let d = map.degree() as u64;
    let degree = d
        .checked_pow(n as u32)
        .filter(|&v| v <= CENSUS_DEGREE_LIMIT)
        .ok_or(Error::DegreeOverflow {
            degree: d.saturating_pow(n as u32),
            limit: CENSUS_DEGREE_LIMIT,
        })?;
    let infinity_fixed = chordal_distance(map.iterate(Infinity, n), Infinity) < 1e-12;
    let finite_count = degree as usize + 1 - usize::from(infinity_fixed);
    let radius = escape_radius(map).map(|r| r * 1.1).unwrap_or(1.5);
    let run = aberth(
        circle_guesses(finite_count, radius),
        |z| fixed_point_quotient(map, n, z),
        AberthOptions::default(),
    );
    let mut roots = run.roots;
    sort_lexicographic(&mut roots);
    let mut points: Vec<SpherePoint> = Vec::with_capacity(roots.len() + 1);
    let mut worst: f64 = 0.0;
    for r in roots {
        if !r.re.is_finite() || !r.im.is_finite() || r.norm() > 1e12 {
            continue;
        }
        let p = Finite(r);
        worst = worst.max(chordal_distance(map.iterate(p, n), p));
        match points.iter_mut().find(|q| chordal_distance(**q, p) < MERGE_TOL) {
            Some(q) => *q = crate::sphere::chart_midpoint(*q, p),
            None => points.push(p),
        }
    }
    if worst > 1e-9 {
        return Err(Error::NoConvergence {
            worst_residual: worst,
        });
    }
    if infinity_fixed {
        points.push(Infinity);
    }
    Ok(points)
}

/// Smallest `k` dividing `n` with `f^k(p) = p` to `tol`.
pub fn primitive_period(map: &RationalMap, p: SpherePoint, n: usize, tol: f64) -> usize {
    let mut z = p;
    for k in 1..=n {
        z = map.eval(z);
        if n.is_multiple_of(k) && chordal_distance(z, p) < tol {
            return k;
        }
    }
    n
}

/// All cycles of primitive period `n`.
pub fn find_periodic_orbits(map: &RationalMap, n: usize) -> Result<Vec<PeriodicOrbitRecord>> {
    let points = fixed_points_of_iterate(map, n)?;
    let primitive: Vec<SpherePoint> = points
        .into_iter()
        .filter(|&p| primitive_period(map, p, n, 1e-8) == n)
        .collect();
    let mut used = vec![false; primitive.len()];
    let mut out = Vec::new();
    for i in 0..primitive.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut orbit = vec![primitive[i]];
        let mut z = primitive[i];
        for _ in 1..n {
            let image = map.eval(z);
            // Snap to the matching root so every orbit point is a polished one.
            let found = (0..primitive.len())
                .filter(|&j| !used[j])
                .map(|j| (j, chordal_distance(primitive[j], image)))
                .filter(|&(_, dist)| dist < MERGE_TOL * 10.0)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            z = match found {
                Some((j, _)) => {
                    used[j] = true;
                    primitive[j]
                }
                None => image,
            };
            orbit.push(z);
        }
        let multiplier = map.orbit_multiplier(&orbit);
        out.push(PeriodicOrbitRecord {
            period: n,
            points: orbit,
            multiplier,
            kind: classify(multiplier),
        });
    }
    Ok(out)
}

/// Rectangle in the finite chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn square(half_width: f64) -> Self {
        Self {
            xmin: -half_width,
            xmax: half_width,
            ymin: -half_width,
            ymax: half_width,
        }
    }
}

/// What a basin raster is computed for.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum BasinTarget {
    Cycle(PeriodicOrbitRecord),
    /// A parabolic cycle; `point` is one of its points.
    Parabolic(PeriodicOrbitRecord),
}

enum Trap {
    Attracting {
        points: Vec<SpherePoint>,
        rho: f64,
    },
    Parabolic {
        point: Complex64,
        step: usize,
        direction: Complex64,
        rho: f64,
    },
}

/// Consecutive petal steps a parabolic orbit must make toward the point.
const PETAL_STEPS: usize = 50;

impl Trap {
    fn attracting(map: &RationalMap, cycle: &PeriodicOrbitRecord) -> Result<Self> {
        let target = (1.0 + cycle.multiplier.norm()) / 2.0;
        if cycle.multiplier.norm() >= 1.0 {
            return Err(Error::TrapConstructionFailed(format!(
                "cycle with |multiplier| {} is not attracting",
                cycle.multiplier.norm()
            )));
        }
        let m = cycle.period;
        let deriv = |mut z: SpherePoint| {
            let mut prod = 1.0;
            for _ in 0..m {
                prod *= map.spherical_derivative(z);
                z = map.eval(z);
            }
            prod
        };
        let mut rho: f64 = 0.1;
        for _ in 0..40 {
            let ok = cycle.points.iter().all(|&c| {
                chordal_circle(c, rho, 24)
                    .into_iter()
                    .chain((0..8).map(|k| ball_point(c, rho, 0.5, k as f64 * 0.785)))
                    .all(|z| deriv(z) < target)
            });
            if ok {
                return Ok(Trap::Attracting {
                    points: cycle.points.clone(),
                    rho,
                });
            }
            rho /= 2.0;
        }
        Err(Error::TrapConstructionFailed(
            "no trap radius certifies the derivative bound".into(),
        ))
    }

    fn parabolic(map: &RationalMap, cycle: &PeriodicOrbitRecord) -> Result<Self> {
        let q = root_of_unity_order(cycle.multiplier, 64).ok_or_else(|| {
            Error::TrapConstructionFailed(format!("multiplier {} is not a root of unity", cycle.multiplier))
        })?;
        let step = cycle.period * q as usize;
        let p = cycle.points[0].finite().ok_or_else(|| {
            Error::TrapConstructionFailed("parabolic point at infinity".into())
        })?;
        let g = |z: Complex64| map.iterate(Finite(z), step).finite();
        let h = 1e-3;
        let a = match (g(p + h), g(p - h), g(p)) {
            (Some(u), Some(v), Some(w)) => (u + v - w * 2.0) / (2.0 * h * h),
            _ => return Err(Error::TrapConstructionFailed("petal expansion failed".into())),
        };
        if a.norm() < 1e-6 {
            return Err(Error::TrapConstructionFailed(
                "degenerate parabolic point (vanishing quadratic term)".into(),
            ));
        }
        let direction = -a.conj() / a.norm();
        Ok(Trap::Parabolic {
            point: p,
            step,
            direction,
            rho: (0.1f64).min(0.25 / a.norm()),
        })
    }
}

fn in_sector(z: Complex64, p: Complex64, u: Complex64, rho: f64) -> bool {
    let w = z - p;
    w.norm() < rho && w.norm() > 0.0 && (w * u.conj()).arg().abs() < std::f64::consts::FRAC_PI_4
}

fn follows_petal(map: &RationalMap, z: Complex64, p: Complex64, step: usize, u: Complex64, rho: f64) -> bool {
    let mut cur = z;
    for _ in 0..PETAL_STEPS {
        let next = match map.iterate(Finite(cur), step).finite() {
            Some(v) => v,
            None => return false,
        };
        if (next - p).norm() >= (cur - p).norm() || !in_sector(next, p, u, rho) {
            return false;
        }
        cur = next;
    }
    true
}

/// Labels of a grid of cells: which target's basin each cell center lies in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasinRaster {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    /// Row-major from the top row (largest imaginary part).
    pub labels: Vec<Option<u16>>,
    /// Cells in the connected component of a cycle point (immediate basin).
    pub immediate: Vec<bool>,
    pub boundary_cells: Vec<usize>,
    pub map_fingerprint: String,
}

impl BasinRaster {
    pub fn hx(&self) -> f64 {
        (self.bounds.xmax - self.bounds.xmin) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.bounds.ymax - self.bounds.ymin) / self.ny as f64
    }

    /// Euclidean cell size `max(hx, hy)`.
    pub fn cell_size(&self) -> f64 {
        self.hx().max(self.hy())
    }

    /// Chordal size of a cell located at `p`.
    pub fn chordal_cell_size_at(&self, p: SpherePoint) -> f64 {
        match p {
            Finite(z) => self.cell_size() * metric_factor(z),
            Infinity => 0.0,
        }
    }

    pub fn cell_center(&self, idx: usize) -> Complex64 {
        let (i, j) = (idx % self.nx, idx / self.nx);
        Complex64::new(
            self.bounds.xmin + (i as f64 + 0.5) * self.hx(),
            self.bounds.ymax - (j as f64 + 0.5) * self.hy(),
        )
    }

    /// Cell containing `z`, if inside the bounds.
    pub fn cell_of(&self, z: Complex64) -> Option<usize> {
        let fi = (z.re - self.bounds.xmin) / self.hx();
        let fj = (self.bounds.ymax - z.im) / self.hy();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(fj as usize * self.nx + fi as usize)
    }

    /// Pixel position of `z` (possibly outside the image).
    pub fn pixel_of(&self, z: Complex64) -> (i64, i64) {
        (
            ((z.re - self.bounds.xmin) / self.hx()).floor() as i64,
            ((self.bounds.ymax - z.im) / self.hy()).floor() as i64,
        )
    }

    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = (idx % self.nx, idx / self.nx);
        let nx = self.nx;
        [
            (i > 0).then(|| idx - 1),
            (i + 1 < nx).then(|| idx + 1),
            (j > 0).then(|| idx - nx),
            (j + 1 < self.ny).then(|| idx + nx),
        ]
        .into_iter()
        .flatten()
    }

    /// Share of cells with the same label in both rasters.
    pub fn agreement(&self, other: &BasinRaster) -> f64 {
        let same = self
            .labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.labels.len().max(1) as f64
    }

    /// Image with one color per label, dark gray for unlabeled cells and
    /// black boundary cells.
    pub fn to_pixmap(&self) -> Pixmap {
        let mut img = Pixmap::new(self.nx, self.ny, [40, 40, 40]);
        for (idx, label) in self.labels.iter().enumerate() {
            if let Some(l) = label {
                img.pixels[idx] = label_color(*l);
            }
        }
        for &idx in &self.boundary_cells {
            img.pixels[idx] = BLACK;
        }
        img
    }
}

/// Raster of the basin of one target.
pub fn rasterize_basin(
    map: &RationalMap,
    target: &BasinTarget,
    bounds: Bounds,
    resolution: (usize, usize),
    max_iters: usize,
) -> Result<BasinRaster> {
    rasterize_basins(map, std::slice::from_ref(target), bounds, resolution, max_iters)
}

/// Raster labeling each cell with the index of the target whose basin
/// contains its center.
pub fn rasterize_basins(
    map: &RationalMap,
    targets: &[BasinTarget],
    bounds: Bounds,
    resolution: (usize, usize),
    max_iters: usize,
) -> Result<BasinRaster> {
    let (nx, ny) = (resolution.0.max(1), resolution.1.max(1));
    if !(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin) {
        return Err(Error::InvalidConfig("raster bounds are empty".into()));
    }
    let traps: Vec<Trap> = targets
        .iter()
        .map(|t| match t {
            BasinTarget::Cycle(c) => Trap::attracting(map, c),
            BasinTarget::Parabolic(c) => Trap::parabolic(map, c),
        })
        .collect::<Result<_>>()?;
    let escape = escape_radius(map);
    let infinity_label = traps.iter().position(|t| match t {
        Trap::Attracting { points, .. } => points.contains(&Infinity),
        Trap::Parabolic { .. } => false,
    });
    let classify_point = |start: Complex64| -> Option<u16> {
        let mut z = Finite(start);
        for _ in 0..=max_iters {
            for (label, trap) in traps.iter().enumerate() {
                match trap {
                    Trap::Attracting { points, rho } => {
                        if points.iter().any(|c| chordal_distance(*c, z) < *rho) {
                            return Some(label as u16);
                        }
                    }
                    Trap::Parabolic {
                        point,
                        step,
                        direction,
                        rho,
                    } => {
                        if let Finite(w) = z {
                            if in_sector(w, *point, *direction, *rho)
                                && follows_petal(map, w, *point, *step, *direction, *rho)
                            {
                                return Some(label as u16);
                            }
                        }
                    }
                }
            }
            if let (Some(r), Finite(w)) = (escape, z) {
                if w.norm() > r {
                    return infinity_label.map(|l| l as u16);
                }
            }
            z = map.eval(z);
        }
        None
    };
    let mut raster = BasinRaster {
        bounds,
        nx,
        ny,
        labels: Vec::new(),
        immediate: vec![false; nx * ny],
        boundary_cells: Vec::new(),
        map_fingerprint: map.fingerprint(),
    };
    raster.labels = (0..nx * ny)
        .into_par_iter()
        .map(|idx| classify_point(raster.cell_center(idx)))
        .collect();

    // Immediate basins by flood fill from the cycle points.
    let mut queue = VecDeque::new();
    for (label, trap) in traps.iter().enumerate() {
        let seeds: Vec<Complex64> = match trap {
            Trap::Attracting { points, .. } => points.iter().filter_map(|p| p.finite()).collect(),
            Trap::Parabolic {
                point,
                direction,
                rho,
                ..
            } => vec![*point + *direction * (rho / 2.0).max(1.5 * raster.cell_size())],
        };
        for s in seeds {
            if let Some(idx) = raster.cell_of(s) {
                if raster.labels[idx] == Some(label as u16) && !raster.immediate[idx] {
                    raster.immediate[idx] = true;
                    queue.push_back(idx);
                }
            }
        }
        while let Some(idx) = queue.pop_front() {
            let nbrs: Vec<usize> = raster.neighbours(idx).collect();
            for n in nbrs {
                if !raster.immediate[n] && raster.labels[n] == Some(label as u16) {
                    raster.immediate[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }

    raster.boundary_cells = (0..nx * ny)
        .filter(|&idx| {
            let own = raster.labels[idx];
            raster.neighbours(idx).any(|n| raster.labels[n] != own)
        })
        .collect();
    Ok(raster)
}

/// Centers of boundary cells on the frontier of the immediate basin.
pub fn boundary_point_set(raster: &BasinRaster) -> Result<Vec<SpherePoint>> {
    let pts: Vec<SpherePoint> = raster
        .boundary_cells
        .iter()
        .copied()
        .filter(|&idx| {
            let cells: Vec<usize> = std::iter::once(idx).chain(raster.neighbours(idx)).collect();
            let has_immediate = cells.iter().any(|&c| raster.immediate[c]);
            let has_other = cells.iter().any(|&c| !raster.immediate[c]);
            has_immediate && has_other
        })
        .map(|idx| Finite(raster.cell_center(idx)))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok(pts)
}

/// Centers of all boundary cells: the frontier of the whole basin, not only
/// of its immediate component.
pub fn basin_frontier(raster: &BasinRaster) -> Result<Vec<SpherePoint>> {
    if raster.boundary_cells.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok(raster
        .boundary_cells
        .iter()
        .map(|&idx| Finite(raster.cell_center(idx)))
        .collect())
}

/// Writes points as `x,y` lines under a header.
pub fn write_points_csv(points: &[SpherePoint], out: &mut impl Write) -> Result<()> {
    writeln!(out, "x,y")?;
    for p in points {
        match p {
            Finite(z) => writeln!(out, "{},{}", z.re, z.im)?,
            Infinity => writeln!(out, "inf,inf")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: SpherePoint, b: SpherePoint, tol: f64) -> bool {
        chordal_distance(a, b) < tol
    }

    #[test]
    fn homogeneous_iteration_matches_direct_iteration() {
        // For polynomials Y_n is constant, so the quotient is exactly g / g'.
        let f = RationalMap::polynomial(vec![cx(0.2, 0.1), cx(0.0, 0.3), cx(0.0, 0.0), cx(1.0, 0.0)]).unwrap();
        for z in [cx(0.3, 0.4), cx(-1.2, 0.7), cx(3.0, -2.0)] {
            let q = fixed_point_quotient(&f, 3, z);
            // Finite-difference oracle for g(z) = f^3(z) - z.
            let g = |w: Complex64| f.iterate(Finite(w), 3).finite().unwrap() - w;
            let h = 1e-6;
            let dg = (g(z + h) - g(z - h)) / (2.0 * h);
            assert!((q - g(z) / dg).norm() < 1e-6 * (1.0 + q.norm()), "{q} vs {}", g(z) / dg);
        }
        // For a rational map every root found is a fixed point of f^2.
        let r = RationalMap::new(vec![cx(0.2, 0.1), cx(0.0, 0.0), cx(1.0, 0.0)], vec![cx(1.0, 0.0), cx(0.3, -0.2)]).unwrap();
        let pts = fixed_points_of_iterate(&r, 2).unwrap();
        assert_eq!(pts.len(), 5);
        for p in pts {
            assert!(chordal_distance(r.iterate(p, 2), p) < 1e-10);
        }
    }

    #[test]
    fn fixed_points_of_z_squared() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let orbits = find_periodic_orbits(&f, 1).unwrap();
        assert_eq!(orbits.len(), 3);
        let find = |p: SpherePoint| orbits.iter().find(|o| close(o.points[0], p, 1e-10)).unwrap();
        assert_eq!(find(Finite(cx(0.0, 0.0))).kind, OrbitKind::Attracting);
        let one = find(Finite(cx(1.0, 0.0)));
        assert_eq!(one.kind, OrbitKind::Repelling);
        assert!((one.multiplier - 2.0).norm() < 1e-10);
        assert_eq!(find(Infinity).kind, OrbitKind::Attracting);
    }

    #[test]
    fn basilica_fixed_points_and_two_cycle() {
        let f = RationalMap::quadratic(cx(-1.0, 0.0));
        let s5 = 5f64.sqrt();
        let orbits = find_periodic_orbits(&f, 1).unwrap();
        for (p, m) in [((1.0 + s5) / 2.0, 1.0 + s5), ((1.0 - s5) / 2.0, 1.0 - s5)] {
            let o = orbits.iter().find(|o| close(o.points[0], Finite(cx(p, 0.0)), 1e-12)).unwrap();
            assert_eq!(o.kind, OrbitKind::Repelling);
            assert!((o.multiplier - m).norm() < 1e-10);
        }
        let two = find_periodic_orbits(&f, 2).unwrap();
        let finite: Vec<_> = two.iter().filter(|o| o.points.iter().all(|p| !p.is_infinite())).collect();
        assert_eq!(finite.len(), 1);
        assert!(finite[0].contains(Finite(cx(0.0, 0.0)), 1e-10));
        assert!(finite[0].contains(Finite(cx(-1.0, 0.0)), 1e-10));
        assert!(finite[0].multiplier.norm() < 1e-10);
    }

    #[test]
    fn census_orbit_closure_and_counts() {
        let f = RationalMap::quadratic(cx(-1.0, 0.0));
        for n in 1..=8usize {
            let orbits = find_periodic_orbits(&f, n).unwrap();
            let finite: Vec<_> = orbits.iter().filter(|o| !o.points.contains(&Infinity)).collect();
            // Number of primitive period-n points of a quadratic polynomial.
            let expected: i64 = (1..=n as i64)
                .filter(|k| n as i64 % k == 0)
                .map(|k| mobius(n as i64 / k) * 2i64.pow(k as u32))
                .sum();
            assert_eq!(finite.len() * n, expected as usize, "period {n}");
            for o in finite {
                for k in 0..n {
                    assert!(close(f.eval(o.points[k]), o.points[(k + 1) % n], 1e-10));
                }
                let rotated: Vec<_> = o.points.iter().cycle().skip(1).take(n).copied().collect();
                let m2 = f.orbit_multiplier(&rotated);
                assert!((m2 - o.multiplier).norm() < 1e-10 * (1.0 + o.multiplier.norm()));
            }
        }
    }

    fn mobius(n: i64) -> i64 {
        let mut n = n;
        let mut result = 1;
        let mut p = 2;
        while p * p <= n {
            if n % p == 0 {
                n /= p;
                if n % p == 0 {
                    return 0;
                }
                result = -result;
            }
            p += 1;
        }
        if n > 1 {
            result = -result;
        }
        result
    }

    #[test]
    fn degree_limit_is_enforced() {
        let f = RationalMap::quadratic(cx(-1.0, 0.0));
        assert!(matches!(find_periodic_orbits(&f, 14), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn parabolic_fixed_point_is_classified() {
        let f = RationalMap::quadratic(cx(0.25, 0.0));
        let orbits = find_periodic_orbits(&f, 1).unwrap();
        let p = orbits.iter().find(|o| close(o.points[0], Finite(cx(0.5, 0.0)), 1e-6)).unwrap();
        assert_eq!(p.kind, OrbitKind::Parabolic);
        assert_eq!(classify(cx(-1.0, 0.0)), OrbitKind::Parabolic);
        assert_eq!(classify(Complex64::from_polar(1.0, 1.0)), OrbitKind::Indifferent);
    }

    fn zero_cycle(f: &RationalMap) -> PeriodicOrbitRecord {
        PeriodicOrbitRecord::from_point(f, Finite(cx(0.0, 0.0)), 1)
    }

    #[test]
    fn unit_disc_raster() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let r = rasterize_basin(&f, &BasinTarget::Cycle(zero_cycle(&f)), Bounds::square(1.5), (256, 256), 200).unwrap();
        let h = r.cell_size();
        let pts = boundary_point_set(&r).unwrap();
        assert!(!pts.is_empty());
        for p in pts {
            let m = p.finite().unwrap().norm();
            assert!((m - 1.0).abs() <= 2.0 * h, "{m}");
        }
        let inside = r.cell_of(cx(0.3, 0.2)).unwrap();
        assert_eq!(r.labels[inside], Some(0));
        assert!(r.immediate[inside]);
        assert_eq!(r.labels[r.cell_of(cx(1.2, 0.0)).unwrap()], None);
    }

    #[test]
    fn basilica_raster_and_frontiers() {
        let f = RationalMap::quadratic(cx(-1.0, 0.0));
        let cycle = PeriodicOrbitRecord::from_point(&f, Finite(cx(0.0, 0.0)), 2);
        let target = BasinTarget::Cycle(cycle);
        let r = rasterize_basin(&f, &target, Bounds::square(2.0), (200, 200), 300).unwrap();
        let h = r.cell_size();
        let pts = boundary_point_set(&r).unwrap();
        let full = basin_frontier(&r).unwrap();
        assert!(full.len() > pts.len());
        for p in &pts {
            let z = p.finite().unwrap();
            let near = |want: bool| {
                (0..r.labels.len()).any(|i| (r.cell_center(i) - z).norm() <= 2.0 * h && r.labels[i].is_some() == want)
            };
            assert!(near(true) && near(false));
        }
        // Raster stability under doubled iteration budget.
        let r2 = rasterize_basin(&f, &target, Bounds::square(2.0), (200, 200), 600).unwrap();
        assert!(r.agreement(&r2) >= 0.99);
        // Coarse boundary sits near the fine one.
        let coarse = rasterize_basin(&f, &target, Bounds::square(2.0), (100, 100), 300).unwrap();
        let hc = coarse.cell_size();
        for p in basin_frontier(&coarse).unwrap() {
            let d = full
                .iter()
                .map(|q| (p.finite().unwrap() - q.finite().unwrap()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(d <= 3.0 * hc);
        }
    }

    #[test]
    fn cauliflower_raster_labels_the_left_axis() {
        let f = RationalMap::quadratic(cx(0.25, 0.0));
        let p = PeriodicOrbitRecord::from_point(&f, Finite(cx(0.5, 0.0)), 1);
        let r = rasterize_basin(&f, &BasinTarget::Parabolic(p), Bounds::square(1.2), (120, 120), 2000).unwrap();
        for x in [-0.4, -0.1, 0.0, 0.2, 0.4] {
            let idx = r.cell_of(cx(x, 0.001)).unwrap();
            assert_eq!(r.labels[idx], Some(0), "x = {x}");
            assert!(r.immediate[idx]);
        }
        assert_eq!(r.labels[r.cell_of(cx(0.9, 0.0)).unwrap()], None);
        assert!(!boundary_point_set(&r).unwrap().is_empty());
    }

    #[test]
    fn repelling_targets_have_no_trap() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let one = PeriodicOrbitRecord::from_point(&f, Finite(cx(1.0, 0.0)), 1);
        assert!(matches!(
            rasterize_basin(&f, &BasinTarget::Cycle(one.clone()), Bounds::square(1.0), (8, 8), 10),
            Err(Error::TrapConstructionFailed(_))
        ));
        assert!(matches!(
            rasterize_basin(&f, &BasinTarget::Parabolic(one), Bounds::square(1.0), (8, 8), 10),
            Err(Error::TrapConstructionFailed(_))
        ));
    }

    #[test]
    fn tiny_raster_and_csv() {
        let f = RationalMap::quadratic(cx(0.0, 0.0));
        let r = rasterize_basin(&f, &BasinTarget::Cycle(zero_cycle(&f)), Bounds::square(1.5), (1, 1), 10).unwrap();
        assert_eq!(r.labels, vec![Some(0)]);
        assert!(matches!(boundary_point_set(&r), Err(Error::EmptyBoundary)));
        let mut buf = Vec::new();
        write_points_csv(&[Finite(cx(1.0, -0.5))], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y\n1,-0.5\n");
    }
}
