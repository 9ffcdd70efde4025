//! Simultaneous-iteration (Durand-Kerner) root finder for the low-degree
//! complex polynomials that arise when inverting the regularizing charts.
//!
//! Degrees here never exceed n + 1 with n <= a few dozen primaries, and
//! the polynomials are well scaled, so the classic Weierstrass iteration
//! is accurate and dependency-free. Multiple roots (the double preimage
//! at a collision point) converge to the usual sqrt(eps) cluster, which
//! the chart inversion collapses before branch selection.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Roots of `coeffs[0] w^d + coeffs[1] w^(d-1) + ... + coeffs[d]`.
pub(crate) fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let first = coeffs
        .iter()
        .position(|c| c.norm() > 0.0)
        .ok_or_else(|| Error::Convergence("zero polynomial".into()))?;
    let coeffs = &coeffs[first..];
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[0];
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();

    // Cauchy bound on root magnitudes
    let radius = 1.0 + monic.iter().skip(1).map(|c| c.norm()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut xs: Vec<Complex64> = (0..degree)
        .map(|k| seed.powu(k as u32 + 1) * radius)
        .collect();

    let eval = |x: Complex64| -> (Complex64, f64) {
        // Horner value plus a running bound used as the attainable noise floor
        let mut p = Complex64::new(1.0, 0.0);
        let mut bound = 1.0;
        let ax = x.norm();
        for c in monic.iter().skip(1) {
            p = p * x + c;
            bound = bound * ax + c.norm();
        }
        (p, bound * 4.0 * f64::EPSILON)
    };

    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        let mut residual_ok = true;
        for k in 0..degree {
            let (p, floor) = eval(xs[k]);
            if p.norm() > floor {
                residual_ok = false;
            }
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if j != k {
                    denom *= xs[k] - xs[j];
                }
            }
            if denom.norm() == 0.0 {
                // nudge coincident iterates apart
                xs[k] += Complex64::new(1e-8 * radius, 1e-8 * radius);
                moved = f64::MAX;
                continue;
            }
            let delta = p / denom;
            xs[k] -= delta;
            moved = moved.max(delta.norm());
        }
        if residual_ok || moved < 1e-15 * radius {
            break;
        }
    }

    for &x in &xs {
        let (p, floor) = eval(x);
        if p.norm() > 1e4 * floor.max(1e-13) {
            return Err(Error::Convergence(format!(
                "residual {} at candidate root {x}",
                p.norm()
            )));
        }
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_roots() {
        // (w - 1)(w + 2) = w^2 + w - 2
        let mut roots = polynomial_roots(&[c(1.0, 0.0), c(1.0, 0.0), c(-2.0, 0.0)]).unwrap();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((roots[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((roots[1] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn roots_of_unity() {
        // w^7 - 1
        let mut coeffs = vec![c(0.0, 0.0); 8];
        coeffs[0] = c(1.0, 0.0);
        coeffs[7] = c(-1.0, 0.0);
        let roots = polynomial_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), 7);
        for r in roots {
            assert!((r.norm() - 1.0).abs() < 1e-12);
            assert!((r.powu(7) - c(1.0, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn double_root_cluster() {
        // (w - 1)^2 (w + 3)
        let roots =
            polynomial_roots(&[c(1.0, 0.0), c(1.0, 0.0), c(-5.0, 0.0), c(3.0, 0.0)]).unwrap();
        let near_one: Vec<_> = roots.iter().filter(|r| (*r - c(1.0, 0.0)).norm() < 1e-6).collect();
        let near_m3: Vec<_> = roots.iter().filter(|r| (*r - c(-3.0, 0.0)).norm() < 1e-10).collect();
        assert_eq!(near_one.len(), 2);
        assert_eq!(near_m3.len(), 1);
    }

    #[test]
    fn complex_coefficients() {
        // roots 2i and 1+i: (w - 2i)(w - 1 - i)
        let r1 = c(0.0, 2.0);
        let r2 = c(1.0, 1.0);
        let roots = polynomial_roots(&[c(1.0, 0.0), -(r1 + r2), r1 * r2]).unwrap();
        for target in [r1, r2] {
            assert!(roots.iter().any(|r| (r - target).norm() < 1e-12));
        }
    }
}
