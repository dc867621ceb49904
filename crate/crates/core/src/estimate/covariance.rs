//! Covariance recovery from centered offsets.
//!
//! The pipeline for one component is: weighted second/fourth moments of the
//! offsets, inversion of the moment equations for the principal variances,
//! a closed-form solve for the orientation, a linear least-squares refinement
//! of the variances at that orientation, and a second orientation solve with
//! the refined variances.
//!
//! The orientation objective is the weighted squared misfit between `s_c^2`
//! and the projection variance,
//!
//! ```text
//! L(phi0) = sum_i w_i (sigma1_sq sin^2(phi_i - phi0) + sigma2_sq cos^2(phi_i - phi0) - s_c,i^2)^2
//!         = sum_i w_i (a cos(alpha0 - alpha_i) + c_i)^2
//! ```
//!
//! with `alpha = 2 phi`, `a = (sigma2_sq - sigma1_sq) / 2` and
//! `c_i = (sigma1_sq + sigma2_sq) / 2 - s_c,i^2`. Its stationary points solve
//! `A_s2 (y^2 - x^2) + A_sc x y + A_s y + A_c x = 0` on the unit circle
//! `x = cos alpha0, y = sin alpha0`, which squares to a quartic in `x`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::mean::solve_sym2;
use super::quartic::solve_quartic;
use crate::error::{Error, Result};
use crate::model::{canonical_orientation, covariance_from_eigen, EigenDecomposition2D, Mat2};
use crate::projection::CenteredLoR;

/// Default lower bound on principal variances (image units squared).
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;
/// Relative residual accepted when checking quartic candidates against the
/// unsquared stationarity equation.
const STATIONARY_TOL: f64 = 1e-8;
const FALLBACK_GRID: usize = 720;

/// Weighted even moments of centered offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMoments {
    pub m2w: f64,
    pub m4w: f64,
    pub mass: f64,
}

/// Weighted means of `s_c^2` and `s_c^4`. `m4w` is clamped to at least `m2w^2`.
pub fn moments_from_offsets(offsets: &[CenteredLoR], weights: &[f64]) -> Result<WeightedMoments> {
    let (mut mass, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for (o, &w) in offsets.iter().zip(weights) {
        let sq = o.s_c * o.s_c;
        mass += w;
        s2 += w * sq;
        s4 += w * sq * sq;
    }
    if !(mass > 0.0) {
        return Err(Error::EmptyComponent(0));
    }
    let m2w = s2 / mass;
    let m4w = (s4 / mass).max(m2w * m2w);
    Ok(WeightedMoments { m2w, m4w, mass })
}

/// Principal variances `(sigma1_sq, sigma2_sq)` matching the two moments.
///
/// A negative discriminant (sampling noise) is clamped to zero, which gives
/// an isotropic answer; both variances are kept at or above `floor`.
pub fn invert_moments(m: &WeightedMoments, floor: f64) -> (f64, f64) {
    let disc = (m.m4w / 3.0 - m.m2w * m.m2w).max(0.0);
    let spread = 2f64.sqrt() * disc.sqrt();
    let sigma1_sq = (m.m2w + spread).max(floor);
    let sigma2_sq = (m.m2w - spread).max(floor);
    (sigma1_sq, sigma2_sq)
}

/// Closed-form pieces of the orientation objective for fixed principal variances.
#[derive(Debug, Clone, Copy)]
pub struct OrientationObjective {
    a: f64,
    cc: f64,
    cs: f64,
    ss: f64,
    tc: f64,
    ts: f64,
    t0: f64,
}

impl OrientationObjective {
    pub fn new(offsets: &[CenteredLoR], weights: &[f64], sigma1_sq: f64, sigma2_sq: f64) -> Self {
        let a = 0.5 * (sigma2_sq - sigma1_sq);
        let mean_var = 0.5 * (sigma1_sq + sigma2_sq);
        let mut obj = Self {
            a,
            cc: 0.0,
            cs: 0.0,
            ss: 0.0,
            tc: 0.0,
            ts: 0.0,
            t0: 0.0,
        };
        for (o, &w) in offsets.iter().zip(weights) {
            let (s, c) = (2.0 * o.phi).sin_cos();
            let ci = mean_var - o.s_c * o.s_c;
            obj.cc += w * c * c;
            obj.cs += w * c * s;
            obj.ss += w * s * s;
            obj.tc += w * ci * c;
            obj.ts += w * ci * s;
            obj.t0 += w * ci * ci;
        }
        obj
    }

    /// Objective value at doubled angle `alpha0 = 2 phi0`.
    pub fn value(&self, alpha0: f64) -> f64 {
        let (s, c) = alpha0.sin_cos();
        let a = self.a;
        a * a * (c * c * self.cc + 2.0 * s * c * self.cs + s * s * self.ss)
            + 2.0 * a * (c * self.tc + s * self.ts)
            + self.t0
    }

    /// `(A_s2, A_sc, A_s, A_c)` of the stationarity equation.
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        let two_a = 2.0 * self.a;
        (two_a * self.cs, two_a * (self.cc - self.ss), 2.0 * self.tc, -2.0 * self.ts)
    }

    /// Stationarity residual `g(alpha0)`, proportional to the derivative of
    /// the objective, and its derivative.
    fn stationarity(&self, alpha0: f64) -> (f64, f64) {
        let (as2, asc, a_s, a_c) = self.coefficients();
        let (s, c) = alpha0.sin_cos();
        let g = as2 * (s * s - c * c) + asc * s * c + a_s * s + a_c * c;
        let dg = 4.0 * as2 * s * c + asc * (c * c - s * s) + a_s * c - a_c * s;
        (g, dg)
    }

    fn coefficient_scale(&self) -> f64 {
        let (as2, asc, a_s, a_c) = self.coefficients();
        as2.abs() + asc.abs() + a_s.abs() + a_c.abs()
    }

    /// Quartic in `x = cos alpha0` whose real roots contain every stationary point.
    pub fn quartic(&self) -> [f64; 5] {
        let (as2, asc, a_s, a_c) = self.coefficients();
        [
            4.0 * as2 * as2 + asc * asc,
            2.0 * asc * a_s - 4.0 * as2 * a_c,
            a_c * a_c + a_s * a_s - asc * asc - 4.0 * as2 * as2,
            2.0 * as2 * a_c - 2.0 * asc * a_s,
            as2 * as2 - a_s * a_s,
        ]
    }

    fn newton_polish(&self, alpha: f64) -> f64 {
        let mut alpha = alpha;
        let (mut g, _) = self.stationarity(alpha);
        for _ in 0..8 {
            let (_, dg) = self.stationarity(alpha);
            if dg == 0.0 || g == 0.0 {
                break;
            }
            let next = alpha - g / dg;
            let (gn, _) = self.stationarity(next);
            if !(gn.abs() < g.abs()) || (next - alpha).abs() > 0.1 {
                break;
            }
            alpha = next;
            g = gn;
        }
        alpha
    }

    /// Stationary doubled angles recovered from the quartic, polished and
    /// filtered against the unsquared equation.
    pub fn stationary_points(&self) -> Vec<f64> {
        let [c4, c3, c2, c1, c0] = self.quartic();
        let tol = STATIONARY_TOL * self.coefficient_scale();
        let mut out = Vec::new();
        for root in solve_quartic(c4, c3, c2, c1, c0) {
            if !is_real_cosine(root) {
                continue;
            }
            let x = root.re.clamp(-1.0, 1.0);
            let y = (1.0 - x * x).max(0.0).sqrt();
            for y in [y, -y] {
                let alpha = self.newton_polish(y.atan2(x));
                if self.stationarity(alpha).0.abs() <= tol {
                    out.push(alpha);
                }
            }
        }
        out
    }

    /// Grid search over `alpha0` followed by golden-section refinement.
    fn grid_minimum(&self) -> f64 {
        let step = 2.0 * PI / FALLBACK_GRID as f64;
        let best = (0..FALLBACK_GRID)
            .map(|i| -PI + step * i as f64)
            .min_by(|a, b| self.value(*a).total_cmp(&self.value(*b)))
            .expect("non-empty grid");
        let (mut lo, mut hi) = (best - step, best + step);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let m1 = hi - ratio * (hi - lo);
            let m2 = lo + ratio * (hi - lo);
            if self.value(m1) <= self.value(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        self.newton_polish(0.5 * (lo + hi))
    }

    /// Minimizing doubled angle among the stationary points, or from the
    /// grid fallback when no quartic root survives the filter.
    pub fn minimize(&self) -> f64 {
        let candidates = self.stationary_points();
        let best = candidates
            .into_iter()
            .min_by(|a, b| self.value(*a).total_cmp(&self.value(*b)));
        match best {
            Some(alpha) => alpha,
            None => self.grid_minimum(),
        }
    }
}

fn is_real_cosine(root: Complex64) -> bool {
    let tol = 1e-6 * root.norm().max(1.0);
    root.im.abs() <= tol && root.re.abs() <= 1.0 + 1e-6
}

/// Direct evaluation of the orientation objective at `phi0`.
pub fn orientation_objective(
    offsets: &[CenteredLoR],
    weights: &[f64],
    sigma1_sq: f64,
    sigma2_sq: f64,
    phi0: f64,
) -> f64 {
    offsets
        .iter()
        .zip(weights)
        .map(|(o, &w)| {
            let (s, c) = (o.phi - phi0).sin_cos();
            let r = sigma1_sq * s * s + sigma2_sq * c * c - o.s_c * o.s_c;
            w * r * r
        })
        .sum()
}

/// Major-axis angle in `(-pi/2, pi/2]` minimizing the orientation objective
/// for fixed principal variances. Isotropic variances return `0`.
pub fn solve_orientation(offsets: &[CenteredLoR], weights: &[f64], sigma1_sq: f64, sigma2_sq: f64) -> Result<f64> {
    if sigma1_sq - sigma2_sq <= 1e-12 * sigma1_sq.abs().max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    let objective = OrientationObjective::new(offsets, weights, sigma1_sq, sigma2_sq);
    let alpha = objective.minimize();
    if !alpha.is_finite() {
        return Err(Error::NoOrientation);
    }
    Ok(canonical_orientation(0.5 * alpha))
}

/// Least-squares principal variances at a fixed orientation.
///
/// Solves the 2x2 normal equations in `(sigma1_sq, sigma2_sq)`, clamps both to
/// `floor`, and orders them so `sigma1_sq >= sigma2_sq`, rotating the axis by a
/// quarter turn when they swap.
pub fn refine_sigmas(offsets: &[CenteredLoR], weights: &[f64], phi0: f64, floor: f64) -> Result<EigenDecomposition2D> {
    let (mut m11, mut m12, mut m22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (o, &w) in offsets.iter().zip(weights) {
        let (s, c) = (phi0 - o.phi).sin_cos();
        let (s2, c2) = (s * s, c * c);
        let sq = o.s_c * o.s_c;
        m11 += w * s2 * s2;
        m12 += w * s2 * c2;
        m22 += w * c2 * c2;
        b1 += w * sq * s2;
        b2 += w * sq * c2;
    }
    let [v1, v2] = solve_sym2(m11, m12, m22, [b1, b2])?;
    EigenDecomposition2D::from_unordered(v1.max(floor), v2.max(floor), phi0)
}

/// A covariance estimate with its principal decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceEstimate {
    pub cov: Mat2,
    pub eigen: EigenDecomposition2D,
}

/// Full covariance pipeline for one component's weighted offsets.
pub fn estimate_covariance(offsets: &[CenteredLoR], weights: &[f64], floor: f64) -> Result<CovarianceEstimate> {
    let moments = moments_from_offsets(offsets, weights)?;
    let (s1, s2) = invert_moments(&moments, floor);
    let phi0 = solve_orientation(offsets, weights, s1, s2)?;
    let refined = refine_sigmas(offsets, weights, phi0, floor)?;
    let phi0 = solve_orientation(offsets, weights, refined.sigma1_sq, refined.sigma2_sq)?;
    let eigen = EigenDecomposition2D::new(refined.sigma1_sq, refined.sigma2_sq, phi0)?;
    Ok(CovarianceEstimate {
        cov: covariance_from_eigen(&eigen),
        eigen,
    })
}
