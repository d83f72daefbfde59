//! Points of the Riemann sphere and the chordal metric.
//!
//! The chordal metric is normalized so that the sphere has diameter 2:
//! `d(a, b) = 2|a - b| / sqrt((1 + |a|^2)(1 + |b|^2))`. Every radius used
//! elsewhere in the crate is measured in this metric.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Moduli above this use the `w = 1/z` chart.
pub const CHART_SWITCH: f64 = 2.0;

/// Diameter of the sphere in the chordal metric.
pub const SPHERE_DIAMETER: f64 = 2.0;

/// Total spherical area in the metric induced by the chordal distance.
pub const SPHERE_AREA: f64 = 4.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

pub use SpherePoint::{Finite, Infinity};

impl SpherePoint {
    /// Builds a point from a complex number; non-finite values collapse to
    /// the point at infinity.
    pub fn new(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            Finite(z)
        } else {
            Infinity
        }
    }

    pub fn from_re_im(re: f64, im: f64) -> Self {
        Self::new(Complex64::new(re, im))
    }

    /// Projective coordinates `[x : y]`; `y == 0` is infinity.
    pub fn from_homogeneous(x: Complex64, y: Complex64) -> Self {
        if y == Complex64::new(0.0, 0.0) {
            return Infinity;
        }
        Self::new(x / y)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            Finite(z) => Some(z),
            Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Infinity)
    }

    /// True when this point is handled in the `1/z` chart.
    pub fn in_outer_chart(&self) -> bool {
        match *self {
            Finite(z) => z.norm() > CHART_SWITCH,
            Infinity => true,
        }
    }

    /// Coordinate in the chart selected by [`Self::in_outer_chart`].
    pub fn chart_coordinate(&self) -> Complex64 {
        match *self {
            Finite(z) if z.norm() <= CHART_SWITCH => z,
            Finite(z) => z.inv(),
            Infinity => Complex64::new(0.0, 0.0),
        }
    }

    /// Coordinate in the `1/z` chart (zero at infinity).
    pub fn outer_coordinate(&self) -> Complex64 {
        match *self {
            Finite(z) => z.inv(),
            Infinity => Complex64::new(0.0, 0.0),
        }
    }

    /// Unit-sphere embedding via inverse stereographic projection.
    pub fn to_unit_sphere(&self) -> [f64; 3] {
        match *self {
            Finite(z) if z.norm() > CHART_SWITCH => {
                let u = z.inv();
                let n2 = u.norm_sqr();
                let s = 1.0 + n2;
                [2.0 * u.re / s, -2.0 * u.im / s, (1.0 - n2) / s]
            }
            Finite(z) => {
                let n2 = z.norm_sqr();
                let s = 1.0 + n2;
                [2.0 * z.re / s, 2.0 * z.im / s, (n2 - 1.0) / s]
            }
            Infinity => [0.0, 0.0, 1.0],
        }
    }

    pub fn from_unit_sphere(v: [f64; 3]) -> Self {
        let denom = 1.0 - v[2];
        if denom <= 0.0 {
            return Infinity;
        }
        Self::new(Complex64::new(v[0] / denom, v[1] / denom))
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::new(z)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self, f.precision()) {
            (Finite(z), Some(p)) => write!(f, "{:.p$}{:+.p$}i", z.re, z.im),
            (Finite(z), None) => write!(f, "{}{:+}i", z.re, z.im),
            (Infinity, _) => write!(f, "inf"),
        }
    }
}

pub fn chordal_distance(a: SpherePoint, b: SpherePoint) -> f64 {
    match (a, b) {
        (Infinity, Infinity) => 0.0,
        (Finite(z), Infinity) | (Infinity, Finite(z)) => 2.0 / (1.0 + z.norm_sqr()).sqrt(),
        (Finite(z), Finite(w)) => {
            // Large moduli lose precision in the direct formula; the 1/z
            // form is algebraically identical.
            match (z.norm() > CHART_SWITCH, w.norm() > CHART_SWITCH) {
                (true, true) => {
                    let (u, v) = (z.inv(), w.inv());
                    2.0 * (u - v).norm() / ((1.0 + u.norm_sqr()) * (1.0 + v.norm_sqr())).sqrt()
                }
                // |z|^2 overflows long before |z| does.
                (true, false) | (false, true) => {
                    let (u, w) = if z.norm() > CHART_SWITCH { (z.inv(), w) } else { (w.inv(), z) };
                    2.0 * (1.0 - w * u).norm() / ((1.0 + u.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
                }
                (false, false) => 2.0 * (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt(),
            }
        }
    }
}

/// Spherical density factor `2 / (1 + |t|^2)` of a chart coordinate; the
/// same expression serves both charts because `z -> 1/z` is an isometry.
pub fn metric_factor(t: Complex64) -> f64 {
    2.0 / (1.0 + t.norm_sqr())
}

/// Midpoint of two points taken in a common chart.
pub fn chart_midpoint(a: SpherePoint, b: SpherePoint) -> SpherePoint {
    lerp(a, b, 0.5)
}

/// Linear interpolation in the chart that holds both points: the finite
/// chart when both moduli are at most [`CHART_SWITCH`], the `1/z` chart
/// otherwise.
pub fn lerp(a: SpherePoint, b: SpherePoint, t: f64) -> SpherePoint {
    match (a, b) {
        (Finite(z), Finite(w)) if z.norm() <= CHART_SWITCH || w.norm() <= CHART_SWITCH => {
            if z.norm() <= 4.0 * CHART_SWITCH && w.norm() <= 4.0 * CHART_SWITCH {
                return Finite(z + (w - z) * t);
            }
            outer_lerp(a, b, t)
        }
        _ => outer_lerp(a, b, t),
    }
}

fn outer_lerp(a: SpherePoint, b: SpherePoint, t: f64) -> SpherePoint {
    let (u, v) = (a.outer_coordinate(), b.outer_coordinate());
    let m = u + (v - u) * t;
    if m.norm() == 0.0 {
        Infinity
    } else {
        SpherePoint::new(m.inv())
    }
}

/// Chordal distance from `p` to the segment `[a, b]` drawn in a common
/// chart. Exact for straight segments of the finite chart, and a close
/// upper bound for the short segments that polylines consist of.
pub fn distance_to_segment(p: SpherePoint, a: SpherePoint, b: SpherePoint) -> f64 {
    let use_outer = a.in_outer_chart() && b.in_outer_chart();
    let (pa, pb, pp) = if use_outer {
        (a.outer_coordinate(), b.outer_coordinate(), p.outer_coordinate())
    } else {
        match (a, b, p) {
            (Finite(x), Finite(y), Finite(z)) => (x, y, z),
            _ => {
                return chordal_distance(p, a).min(chordal_distance(p, b));
            }
        }
    };
    let ab = pb - pa;
    let len2 = ab.norm_sqr();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((pp - pa) * ab.conj()).re / len2
    }
    .clamp(0.0, 1.0);
    let q = pa + ab * t;
    let proj = if use_outer {
        if q.norm() == 0.0 {
            Infinity
        } else {
            SpherePoint::new(q.inv())
        }
    } else {
        Finite(q)
    };
    chordal_distance(p, proj)
}

/// Rotation of the sphere sending `center` to 0; an isometry of the chordal
/// metric.
fn to_origin(center: Complex64, z: Complex64) -> Complex64 {
    (z - center) / (Complex64::new(1.0, 0.0) + center.conj() * z)
}

fn from_origin(center: Complex64, u: Complex64) -> SpherePoint {
    let denom = Complex64::new(1.0, 0.0) - center.conj() * u;
    if denom.norm() == 0.0 {
        Infinity
    } else {
        SpherePoint::new((u + center) / denom)
    }
}

/// Points at chordal distance exactly `radius` from `center`, equally
/// spaced in angle. Requires `0 < radius < 2`.
pub fn chordal_circle(center: SpherePoint, radius: f64, samples: usize) -> Vec<SpherePoint> {
    let s = radius / (4.0 - radius * radius).max(f64::MIN_POSITIVE).sqrt();
    (0..samples)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / samples as f64;
            let u = Complex64::from_polar(s, theta);
            match center {
                Finite(c) => from_origin(c, u),
                // Around infinity the chart w = 1/z is itself centered.
                Infinity => SpherePoint::new(u.inv()),
            }
        })
        .collect()
}

/// Point of the chordal ball `B(center, radius)` parameterized by a polar
/// pair in the rotated chart; `frac` in `[0, 1]` scales the radius.
pub fn ball_point(center: SpherePoint, radius: f64, frac: f64, theta: f64) -> SpherePoint {
    let rho = radius * frac;
    let s = rho / (4.0 - rho * rho).max(f64::MIN_POSITIVE).sqrt();
    let u = Complex64::from_polar(s, theta);
    match center {
        Finite(c) => from_origin(c, u),
        Infinity => {
            if u.norm() == 0.0 {
                Infinity
            } else {
                SpherePoint::new(u.inv())
            }
        }
    }
}

/// Chordal distance of `z` to `center` computed through the rotation; used
/// by tests as an independent route to [`chordal_distance`].
pub fn rotated_distance(center: Complex64, z: Complex64) -> f64 {
    let u = to_origin(center, z);
    2.0 * u.norm() / (1.0 + u.norm_sqr()).sqrt()
}
