//! Simultaneous polynomial root finding.
//!
//! [`aberth`] is the engine: it only needs the Newton quotient `p / p'`, so
//! it serves both coefficient polynomials ([`poly_roots`]) and polynomials
//! that are cheaper to evaluate by iteration than by expansion (the
//! periodic-point census).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Coefficient-relative residual target.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Above this degree the Aberth sweep runs in parallel (Jacobi updates).
const PARALLEL_DEGREE: usize = 96;

#[derive(Clone, Copy, Debug)]
pub struct AberthOptions {
    pub max_iters: usize,
    /// Relative step size at which a root counts as converged.
    pub step_tol: f64,
}

impl Default for AberthOptions {
    fn default() -> Self {
        Self {
            max_iters: 800,
            step_tol: 1e-15,
        }
    }
}

/// Result of an Aberth run: approximations and whether every root's last
/// step fell below the tolerance.
#[derive(Clone, Debug)]
pub struct AberthRun {
    pub roots: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Starting points spread on a circle, rotated off the real axis so that
/// conjugate-symmetric problems do not stall.
pub fn circle_guesses(degree: usize, radius: f64) -> Vec<Complex64> {
    (0..degree)
        .map(|k| {
            let theta = std::f64::consts::TAU * (k as f64 + 0.25) / degree as f64 + 0.4;
            Complex64::from_polar(radius, theta)
        })
        .collect()
}

/// Aberth-Ehrlich iteration. `newton_quotient(z)` must return `p(z)/p'(z)`.
pub fn aberth<F>(initial: Vec<Complex64>, newton_quotient: F, opts: AberthOptions) -> AberthRun
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let n = initial.len();
    let mut roots = initial;
    let mut done = vec![false; n];
    let mut iterations = 0;
    if n == 0 {
        return AberthRun {
            roots,
            converged: true,
            iterations,
        };
    }
    let step = |k: usize, roots: &[Complex64]| -> Complex64 {
        let z = roots[k];
        let q = newton_quotient(z);
        if !q.re.is_finite() || !q.im.is_finite() {
            return ZERO;
        }
        let mut s = ZERO;
        for (j, &w) in roots.iter().enumerate() {
            if j != k {
                let diff = z - w;
                if diff != ZERO {
                    s += diff.inv();
                }
            }
        }
        let denom = ONE - q * s;
        if denom == ZERO {
            q
        } else {
            q / denom
        }
    };
    while iterations < opts.max_iters {
        iterations += 1;
        let active: Vec<usize> = (0..n).filter(|&k| !done[k]).collect();
        if active.is_empty() {
            break;
        }
        if n >= PARALLEL_DEGREE {
            let steps: Vec<(usize, Complex64)> =
                active.par_iter().map(|&k| (k, step(k, &roots))).collect();
            for (k, w) in steps {
                roots[k] -= w;
                if w.norm() <= opts.step_tol * (1.0 + roots[k].norm()) || w == ZERO {
                    done[k] = true;
                }
            }
        } else {
            for k in active {
                let w = step(k, &roots);
                roots[k] -= w;
                if w.norm() <= opts.step_tol * (1.0 + roots[k].norm()) || w == ZERO {
                    done[k] = true;
                }
            }
        }
    }
    AberthRun {
        converged: done.iter().all(|&d| d),
        roots,
        iterations,
    }
}

/// Horner evaluation of an ascending coefficient sequence.
pub fn poly_eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(ZERO, |acc, &a| acc * z + a)
}

/// Value and first derivative in one Horner pass.
pub fn poly_eval_d(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// `sum |a_j| |z|^j`, the natural scale of `p(z)`'s rounding error.
pub fn poly_scale(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a.norm())
}

pub fn poly_derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &a)| a * j as f64)
        .collect()
}

pub fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(ZERO) - b.get(k).copied().unwrap_or(ZERO))
        .collect()
}

/// Drops trailing exactly-zero coefficients.
pub fn trim(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut v = coeffs.to_vec();
    while v.last().is_some_and(|c| *c == ZERO) {
        v.pop();
    }
    v
}

/// Monic-normalized expansion of `lead * prod (z - r)`.
pub fn poly_from_roots(lead: Complex64, roots: &[Complex64]) -> Vec<Complex64> {
    roots
        .iter()
        .fold(vec![lead], |acc, &r| poly_mul(&acc, &[-r, ONE]))
}

fn newton_polish(coeffs: &[Complex64], deriv: &[Complex64], mut z: Complex64) -> Complex64 {
    let mut best = z;
    let mut best_res = poly_eval(coeffs, z).norm();
    for _ in 0..12 {
        let p = poly_eval(coeffs, z);
        let dp = poly_eval(deriv, z);
        if dp == ZERO || p == ZERO {
            break;
        }
        z -= p / dp;
        let res = poly_eval(coeffs, z).norm();
        if res < best_res {
            best_res = res;
            best = z;
        } else {
            break;
        }
    }
    best
}

/// Sorts lexicographically by real part, then imaginary part.
pub fn sort_lexicographic(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// All complex roots of an ascending coefficient sequence, with
/// multiplicity, polished and sorted lexicographically.
pub fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    poly_roots_from(coeffs, None)
}

/// Like [`poly_roots`], optionally warm-started from earlier approximations
/// (used when tracking the fiber of a slowly moving point).
pub fn poly_roots_from(coeffs: &[Complex64], warm: Option<&[Complex64]>) -> Result<Vec<Complex64>> {
    let p = trim(coeffs);
    if p.len() < 2 {
        return Err(Error::InvalidPolynomial(
            "degree must be at least 1 with a nonzero leading coefficient".into(),
        ));
    }
    if p.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidPolynomial("non-finite coefficient".into()));
    }
    let degree = p.len() - 1;
    let lead = p[degree];
    let mut roots = match degree {
        1 => vec![-p[0] / p[1]],
        2 => quadratic(p[2], p[1], p[0]).to_vec(),
        _ => {
            let dp = poly_derivative(&p);
            let initial = match warm {
                Some(w) if w.len() == degree => w.to_vec(),
                _ => {
                    let ratio = p[..degree]
                        .iter()
                        .map(|c| (c / lead).norm())
                        .fold(0.0, f64::max);
                    circle_guesses(degree, 1.0 + ratio)
                }
            };
            let run = aberth(
                initial,
                |z| {
                    let v = poly_eval(&p, z);
                    let d = poly_eval(&dp, z);
                    v / d
                },
                AberthOptions::default(),
            );
            run.roots
        }
    };
    let dp = poly_derivative(&p);
    let mut worst: f64 = 0.0;
    for r in roots.iter_mut() {
        if degree > 1 {
            *r = newton_polish(&p, &dp, *r);
        }
        let scale = poly_scale(&p, *r).max(1.0);
        worst = worst.max(poly_eval(&p, *r).norm() / scale);
    }
    // Multiple roots cap the attainable accuracy near sqrt(eps); the
    // coefficient-relative residual still certifies them.
    if worst.is_nan() || worst > RESIDUAL_TOL * (degree as f64).max(1.0) {
        return Err(Error::NoConvergence {
            worst_residual: worst,
        });
    }
    sort_lexicographic(&mut roots);
    Ok(roots)
}

/// Numerically stable roots of `a z^2 + b z + c`.
pub fn quadratic(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - a * c * 4.0).sqrt();
    // Pick the sign that avoids cancellation.
    let q = if (b.conj() * disc).re >= 0.0 {
        -(b + disc) * 0.5
    } else {
        -(b - disc) * 0.5
    };
    if q == ZERO {
        let r = -b / (a * 2.0);
        return [r, r];
    }
    [q / a, c / q]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_examples() {
        let r = poly_roots(&[cx(-1.0, 0.0), ZERO, ONE]).unwrap();
        assert!((r[0] - cx(-1.0, 0.0)).norm() < 1e-15);
        assert!((r[1] - cx(1.0, 0.0)).norm() < 1e-15);
        let r = poly_roots(&[ONE, ZERO, ONE]).unwrap();
        assert!((r[0] - cx(0.0, -1.0)).norm() < 1e-15);
        assert!((r[1] - cx(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn cubic_reexpands_to_its_coefficients() {
        // z^3 - 2z + 2
        let coeffs = [cx(2.0, 0.0), cx(-2.0, 0.0), ZERO, ONE];
        let roots = poly_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), 3);
        let back = poly_from_roots(ONE, &roots);
        for (a, b) in back.iter().zip(coeffs.iter()) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn double_root_is_reported_twice() {
        // (z - 0.5)^2 (z + 2)
        let coeffs = poly_from_roots(ONE, &[cx(0.5, 0.0), cx(0.5, 0.0), cx(-2.0, 0.0)]);
        let roots = poly_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), 3);
        assert!((roots[1] - cx(0.5, 0.0)).norm() < 1e-6);
        assert!((roots[2] - cx(0.5, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn constant_is_rejected() {
        assert!(matches!(
            poly_roots(&[ONE, ZERO]),
            Err(Error::InvalidPolynomial(_))
        ));
    }

    #[test]
    fn ordering_is_lexicographic() {
        let coeffs = poly_from_roots(ONE, &[cx(1.0, 1.0), cx(1.0, -1.0), cx(-3.0, 0.0), cx(0.0, 2.0)]);
        let roots = poly_roots(&coeffs).unwrap();
        for w in roots.windows(2) {
            assert!(w[0].re < w[1].re || (w[0].re == w[1].re && w[0].im <= w[1].im) || (w[0].re - w[1].re).abs() < 1e-12);
        }
    }

    #[test]
    fn large_coefficients_use_relative_tolerance() {
        let coeffs = poly_from_roots(cx(1e9, 0.0), &[cx(3.0, 1.0), cx(-2.0, 0.5), cx(0.1, 0.0), cx(7.0, -7.0)]);
        let roots = poly_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn vieta_relations_hold(raw in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..9)) {
            let given: Vec<Complex64> = raw.iter().map(|&(a, b)| cx(a, b)).collect();
            let coeffs = poly_from_roots(ONE, &given);
            let found = poly_roots(&coeffs).unwrap();
            prop_assert_eq!(found.len(), given.len());
            let sum_given: Complex64 = given.iter().sum();
            let sum_found: Complex64 = found.iter().sum();
            let prod_given: Complex64 = given.iter().product();
            let prod_found: Complex64 = found.iter().product();
            let s = 1.0 + sum_given.norm();
            let p = 1.0 + prod_given.norm();
            prop_assert!((sum_given - sum_found).norm() / s < 1e-9);
            prop_assert!((prod_given - prod_found).norm() / p < 1e-9);
        }
    }
}
