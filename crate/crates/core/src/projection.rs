//! Projection-domain mathematics.
//!
//! Integrating a bivariate normal along every line at angle `phi` gives a
//! univariate normal in `s` whose variance is the quadratic form of the
//! covariance with the line normal `n = (-sin phi, cos phi)`. With the major
//! axis `u1 = (cos phi0, sin phi0)` carrying `sigma1_sq`, this is
//!
//! ```text
//! sigma_p^2(phi) = sigma1_sq * sin^2(phi - phi0) + sigma2_sq * cos^2(phi - phi0)
//! ```
//!
//! Averaging over a uniform angle yields the marginal density of centered
//! offsets and its even moments, which drive the covariance estimator.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{EigenDecomposition2D, GaussianComponent2D, LineOfResponse};

/// Smallest projection variance accepted by [`line_integral_density`].
pub const MIN_PROJECTION_VARIANCE: f64 = 1e-15;
/// Node count of the angular Gauss-Legendre rule used for the marginal pdf.
pub const MARGINAL_NODES: usize = 201;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Principal variances and orientation of one component, as seen by projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionVarianceParams {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub phi0: f64,
}

impl ProjectionVarianceParams {
    pub fn new(sigma1_sq: f64, sigma2_sq: f64, phi0: f64) -> Result<Self> {
        if !(sigma2_sq >= 0.0 && sigma1_sq >= sigma2_sq) {
            return Err(Error::InvalidModel(format!(
                "projection variances must satisfy {sigma1_sq} >= {sigma2_sq} >= 0"
            )));
        }
        Ok(Self {
            sigma1_sq,
            sigma2_sq,
            phi0,
        })
    }
}

impl From<EigenDecomposition2D> for ProjectionVarianceParams {
    fn from(e: EigenDecomposition2D) -> Self {
        Self {
            sigma1_sq: e.sigma1_sq,
            sigma2_sq: e.sigma2_sq,
            phi0: e.phi0,
        }
    }
}

/// A line of response expressed relative to a component mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredLoR {
    pub s_c: f64,
    pub phi: f64,
}

/// Variance of the projection at angle `phi`.
pub fn projection_variance(p: &ProjectionVarianceParams, phi: f64) -> f64 {
    let (sin, cos) = (phi - p.phi0).sin_cos();
    p.sigma1_sq * sin * sin + p.sigma2_sq * cos * cos
}

/// Projection variance straight from a covariance matrix: `n^T C n`.
pub fn projection_variance_of_cov(cov: &[[f64; 2]; 2], phi: f64) -> f64 {
    let (sin, cos) = phi.sin_cos();
    cov[0][0] * sin * sin - 2.0 * cov[0][1] * sin * cos + cov[1][1] * cos * cos
}

/// Log of [`line_integral_density`]; finite far into the tails.
pub fn log_line_integral_density(component: &GaussianComponent2D, lor: &LineOfResponse) -> Result<f64> {
    let var = projection_variance_of_cov(&component.cov(), lor.phi());
    if !(var >= MIN_PROJECTION_VARIANCE) {
        return Err(Error::DegenerateProjection(var));
    }
    let (sin, cos) = lor.phi().sin_cos();
    let mean = component.mean();
    let s_c = lor.s() - (-mean[0] * sin + mean[1] * cos);
    Ok(-LN_SQRT_2PI - 0.5 * var.ln() - s_c * s_c / (2.0 * var))
}

/// Integral of the component's (unweighted) density along the line of response.
pub fn line_integral_density(component: &GaussianComponent2D, lor: &LineOfResponse) -> Result<f64> {
    log_line_integral_density(component, lor).map(f64::exp)
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    if n == 0 {
        return rule;
    }
    for i in 0..n {
        // Tricomi initial guess for the i-th root
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let j = j as f64;
                let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

fn marginal_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(MARGINAL_NODES))
}

/// Marginal density of centered offsets under a uniform angle on `[-pi/2, pi/2]`,
/// evaluated with `nodes`-point Gauss-Legendre quadrature.
pub fn marginal_pdf_sc_with_nodes(p: &ProjectionVarianceParams, s_c: f64, nodes: usize) -> f64 {
    let rule = gauss_legendre(nodes);
    marginal_sum(p, s_c, &rule)
}

fn marginal_sum(p: &ProjectionVarianceParams, s_c: f64, rule: &[(f64, f64)]) -> f64 {
    // phi = (pi/2) t, dphi = (pi/2) dt, prefactor 1/pi
    let sum: f64 = rule
        .iter()
        .map(|&(t, w)| w * normal_pdf(s_c, projection_variance(p, FRAC_PI_2 * t)))
        .sum();
    0.5 * sum
}

/// Marginal density of the centered offset `s_c`.
pub fn marginal_pdf_sc(p: &ProjectionVarianceParams, s_c: f64) -> Result<f64> {
    if !(p.sigma2_sq > 0.0) {
        return Err(Error::DegenerateProjection(p.sigma2_sq));
    }
    Ok(marginal_sum(p, s_c, marginal_rule()))
}

/// Second and fourth moments of the marginal offset distribution.
pub fn theoretical_moments(p: &ProjectionVarianceParams) -> (f64, f64) {
    let (a, b) = (p.sigma1_sq, p.sigma2_sq);
    let m2 = 0.5 * (a + b);
    let m4 = (9.0 * a * a + 6.0 * a * b + 9.0 * b * b) / 8.0;
    (m2, m4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::covariance_from_eigen;

    #[test]
    fn isotropic_projection_is_constant() {
        let p = ProjectionVarianceParams::new(0.0625, 0.0625, 0.7).unwrap();
        for phi in [-1.5, -0.3, 0.0, 0.9, FRAC_PI_2] {
            assert!((projection_variance(&p, phi) - 0.0625).abs() < 1e-16);
        }
    }

    #[test]
    fn overlapping_component_projections() {
        let cov = [[0.04, 0.03], [0.03, 0.09]];
        let e = crate::model::eigen_from_covariance(&cov).unwrap();
        let p = ProjectionVarianceParams::from(e);
        assert!((projection_variance(&p, 0.0) - 0.09).abs() < 1e-15);
        assert!((projection_variance(&p, FRAC_PI_2) - 0.04).abs() < 1e-15);
        assert!((projection_variance_of_cov(&cov, 0.0) - 0.09).abs() < 1e-16);
    }

    #[test]
    fn major_axis_has_smallest_projection_across_it() {
        // a line parallel to the major axis sees only the minor spread
        let p = ProjectionVarianceParams::new(0.1, 0.02, 0.3).unwrap();
        assert!((projection_variance(&p, 0.3) - 0.02).abs() < 1e-16);
        assert!((projection_variance(&p, 0.3 + FRAC_PI_2) - 0.1).abs() < 1e-16);
        let cov = covariance_from_eigen(&EigenDecomposition2D::new(0.1, 0.02, 0.3).unwrap());
        assert!((projection_variance_of_cov(&cov, 0.3) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn line_through_mean_is_gaussian_peak() {
        let c = GaussianComponent2D::new([0.4, -0.2], [[0.04, 0.03], [0.03, 0.09]], 1.0).unwrap();
        let phi: f64 = 0.6;
        let s = -0.4 * phi.sin() + -0.2 * phi.cos();
        let var = projection_variance_of_cov(&c.cov(), phi);
        let v = line_integral_density(&c, &LineOfResponse::new(s, phi)).unwrap();
        assert!((v - 1.0 / (2.0 * PI * var).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn isotropic_line_integral_value() {
        let c = GaussianComponent2D::new([0.0, 0.0], [[0.0625, 0.0], [0.0, 0.0625]], 1.0).unwrap();
        for phi in [-1.2, 0.0, 0.4] {
            let v = line_integral_density(&c, &LineOfResponse::new(0.25, phi)).unwrap();
            let expected = (-0.5f64).exp() / ((2.0 * PI).sqrt() * 0.25);
            assert!((v - expected).abs() < 1e-14);
            assert!((v - 0.96788).abs() < 1e-5);
        }
    }

    #[test]
    fn far_line_underflows_gracefully() {
        let c = GaussianComponent2D::new([0.0, 0.0], [[0.01, 0.0], [0.0, 0.01]], 1.0).unwrap();
        let v = line_integral_density(&c, &LineOfResponse::new(1.0, 0.0)).unwrap();
        assert!((0.0..1e-20).contains(&v));
        let l = log_line_integral_density(&c, &LineOfResponse::new(50.0, 0.0)).unwrap();
        assert!(l.is_finite() && l < -1e4);
    }

    #[test]
    fn degenerate_projection_is_an_error() {
        let c = GaussianComponent2D::new([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        assert!(matches!(
            line_integral_density(&c, &LineOfResponse::new(0.0, 0.0)),
            Err(Error::DegenerateProjection(_))
        ));
    }

    #[test]
    fn marginal_isotropic_is_normal() {
        let p = ProjectionVarianceParams::new(1.0, 1.0, 0.0).unwrap();
        let v = marginal_pdf_sc(&p, 0.0).unwrap();
        assert!((v - 0.398942).abs() < 1e-6);
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn marginal_is_even_and_converged() {
        let p = ProjectionVarianceParams::new(0.1, 0.02, 0.3).unwrap();
        for s in [0.0, 0.05, 0.1, 0.4] {
            let a = marginal_pdf_sc(&p, s).unwrap();
            assert_eq!(a, marginal_pdf_sc(&p, -s).unwrap());
        }
        let coarse = marginal_pdf_sc(&p, 0.1).unwrap();
        let fine = marginal_pdf_sc_with_nodes(&p, 0.1, 2010);
        assert!((coarse - fine).abs() < 1e-8, "{coarse} vs {fine}");
    }

    #[test]
    fn marginal_requires_positive_minor_variance() {
        let p = ProjectionVarianceParams::new(0.1, 0.0, 0.0).unwrap();
        assert!(marginal_pdf_sc(&p, 0.1).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(5);
        let w: f64 = rule.iter().map(|r| r.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
        // exact up to degree 9
        let x8: f64 = rule.iter().map(|&(x, w)| w * x.powi(8)).sum();
        assert!((x8 - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn moments_examples() {
        let (m2, m4) = theoretical_moments(&ProjectionVarianceParams::new(0.3, 0.3, 1.0).unwrap());
        assert!((m2 - 0.3).abs() < 1e-16 && (m4 - 3.0 * 0.09).abs() < 1e-15);
        let (m2, m4) = theoretical_moments(&ProjectionVarianceParams::new(0.1, 0.02, 0.0).unwrap());
        let by_hand = 9.0 * 0.01 / 8.0 + 3.0 * 0.002 / 4.0 + 9.0 * 0.0004 / 8.0;
        assert!((m2 - 0.06).abs() < 1e-16);
        assert!((m4 - by_hand).abs() < 1e-16 && (m4 - 0.0132).abs() < 1e-15);
    }
}
