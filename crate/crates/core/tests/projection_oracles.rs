use std::f64::consts::{FRAC_PI_2, PI};

use gmmlor_core::estimate::{invert_moments, WeightedMoments};
use gmmlor_core::model::{eigen_from_covariance, GaussianComponent2D, LineOfResponse};
use gmmlor_core::projection::{
    gauss_legendre, line_integral_density, marginal_pdf_sc, projection_variance, theoretical_moments,
    ProjectionVarianceParams,
};
use gmmlor_core::rng::{EventRng, Stream};

/// Adaptive Simpson quadrature with Richardson correction; the tolerance is
/// split between halves so the total error stays below `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 30)
}

fn pdf2(mean: [f64; 2], cov: [[f64; 2]; 2], x: f64, y: f64) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dy) = (x - mean[0], y - mean[1]);
    let q = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

fn random_cov(rng: &mut EventRng) -> [[f64; 2]; 2] {
    let a = 10f64.powf(rng.uniform_in(-3.0, 0.0));
    let c = a * 10f64.powf(rng.uniform_in(-1.0, 1.0));
    let b = rng.uniform_in(-0.9, 0.9) * (a * c).sqrt();
    [[a, b], [b, c]]
}

#[test]
fn line_integral_matches_adaptive_quadrature() {
    let mut rng = EventRng::new(11, Stream::Simulation);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cov = random_cov(&mut rng);
        let mean = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
        let phi = rng.uniform_in(-FRAC_PI_2, FRAC_PI_2);
        let (sin, cos) = phi.sin_cos();
        let normal = [-sin, cos];
        let dir = [cos, sin];
        let var = cov[0][0] * sin * sin - 2.0 * cov[0][1] * sin * cos + cov[1][1] * cos * cos;
        let s = normal[0] * mean[0] + normal[1] * mean[1] + rng.uniform_in(-3.0, 3.0) * var.sqrt();
        let comp = GaussianComponent2D::new(mean, cov, 1.0).unwrap();
        let closed = line_integral_density(&comp, &LineOfResponse::new(s, phi)).unwrap();

        // walk the line x(t) = s n + t d around the point nearest the mean
        let t0 = dir[0] * mean[0] + dir[1] * mean[1];
        let reach = 40.0 * cov[0][0].max(cov[1][1]).sqrt();
        let f = |t: f64| pdf2(mean, cov, s * normal[0] + t * dir[0], s * normal[1] + t * dir[1]);
        let numeric = adaptive_simpson(&f, t0 - reach, t0 + reach, 1e-12 * closed);
        let rel = (numeric - closed).abs() / closed;
        worst = worst.max(rel);
        assert!(rel < 1e-8, "phi {phi} s {s}: closed {closed} numeric {numeric}");
    }
    println!("worst relative deviation {worst:e}");
}

#[test]
fn projection_variance_is_the_normal_quadratic_form() {
    let mut rng = EventRng::new(12, Stream::Simulation);
    for _ in 0..1000 {
        let cov = random_cov(&mut rng);
        let phi = rng.uniform_in(-PI, PI);
        let params = ProjectionVarianceParams::from(eigen_from_covariance(&cov).unwrap());
        let n = [-phi.sin(), phi.cos()];
        let direct = n[0] * (cov[0][0] * n[0] + cov[0][1] * n[1]) + n[1] * (cov[1][0] * n[0] + cov[1][1] * n[1]);
        let via_eigen = projection_variance(&params, phi);
        assert!((via_eigen - direct).abs() <= 1e-12 * direct, "{cov:?} phi {phi}: {via_eigen} vs {direct}");
    }
}

fn integrate_marginal(p: &ProjectionVarianceParams, power: i32) -> f64 {
    // marginal is even; integrate 2 * int_0^R with composite Gauss-Legendre
    let reach = 12.0 * p.sigma1_sq.sqrt();
    let rule = gauss_legendre(40);
    let panels = 60;
    let h = reach / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        for &(t, w) in &rule {
            let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
            total += 0.5 * (b - a) * w * x.powi(power) * marginal_pdf_sc(p, x).unwrap();
        }
    }
    2.0 * total
}

#[test]
fn marginal_is_a_density_with_the_closed_form_moments() {
    for (a, b, phi0) in [(0.0625, 0.0625, 0.0), (0.104051, 0.025949, 1.1), (0.0411, 0.0089, -0.3), (1.0, 1e-3, 0.5)] {
        let p = ProjectionVarianceParams::new(a, b, phi0).unwrap();
        let (m2, m4) = theoretical_moments(&p);
        assert!((integrate_marginal(&p, 0) - 1.0).abs() < 1e-8, "mass for {a}, {b}");
        assert!((integrate_marginal(&p, 2) - m2).abs() < 1e-8 * m2, "m2 for {a}, {b}");
        assert!((integrate_marginal(&p, 4) - m4).abs() < 1e-7 * m4, "m4 for {a}, {b}");
    }
}

#[test]
fn moment_inversion_round_trip() {
    let mut rng = EventRng::new(13, Stream::Simulation);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s1 = 10f64.powf(rng.uniform_in(-6.0, 2.0));
        let s2 = 10f64.powf(rng.uniform_in(-6.0, s1.log10()));
        let p = ProjectionVarianceParams::new(s1, s2, 0.0).unwrap();
        let (m2w, m4w) = theoretical_moments(&p);
        let (r1, r2) = invert_moments(&WeightedMoments { m2w, m4w, mass: 1.0 }, 0.0);
        let err = (r1 - s1).abs().max((r2 - s2).abs()) / s1;
        worst = worst.max(err);
        assert!(err <= 1e-12, "{s1} {s2} -> {r1} {r2}");
    }
    println!("worst relative deviation {worst:e}");
}
