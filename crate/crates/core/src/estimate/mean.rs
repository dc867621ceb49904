//! Weighted least-squares fit of a component mean to its sinusoid.

use crate::error::{Error, Result};
use crate::model::{LineOfResponse, Vec2};
use crate::projection::CenteredLoR;

/// Largest condition number accepted for the 2x2 normal matrices.
pub const MAX_CONDITION: f64 = 1e12;

/// Condition number of a symmetric PSD 2x2 matrix `[[a, b], [b, c]]`.
pub(crate) fn condition_number(a: f64, b: f64, c: f64) -> f64 {
    let mid = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let hi = mid + radius;
    let lo = if hi > 0.0 { (a * c - b * b) / hi } else { 0.0 };
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Solves `[[a, b], [b, c]] x = r` after a conditioning check.
pub(crate) fn solve_sym2(a: f64, b: f64, c: f64, r: [f64; 2]) -> Result<[f64; 2]> {
    let cond = condition_number(a, b, c);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::DegenerateGeometry(cond));
    }
    let det = a * c - b * b;
    Ok([(c * r[0] - b * r[1]) / det, (a * r[1] - b * r[0]) / det])
}

/// Point whose sinusoid `-x sin(phi) + y cos(phi)` best fits the weighted events.
///
/// Minimizes `sum_i w_i (-x sin(phi_i) + y cos(phi_i) - s_i)^2` through its
/// symmetric normal equations
///
/// ```text
/// [ sum w sin^2        -sum w sin cos ] [x]   [ -sum w s sin ]
/// [ -sum w sin cos      sum w cos^2   ] [y] = [  sum w s cos ]
/// ```
pub fn fit_mean(lors: &[LineOfResponse], weights: &[f64]) -> Result<Vec2> {
    debug_assert_eq!(lors.len(), weights.len());
    let (mut ss, mut sc, mut cc, mut rs, mut rc, mut mass) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (lor, &w) in lors.iter().zip(weights) {
        let (sin, cos) = lor.phi().sin_cos();
        ss += w * sin * sin;
        sc += w * sin * cos;
        cc += w * cos * cos;
        rs += w * lor.s() * sin;
        rc += w * lor.s() * cos;
        mass += w;
    }
    if !(mass > 0.0) {
        return Err(Error::EmptyComponent(0));
    }
    solve_sym2(ss, -sc, cc, [-rs, rc])
}

/// Offsets of each event from the sinusoid of `mean`; angles are kept.
pub fn center_offsets(lors: &[LineOfResponse], mean: Vec2) -> Vec<CenteredLoR> {
    lors.iter()
        .map(|lor| {
            let (sin, cos) = lor.phi().sin_cos();
            CenteredLoR {
                s_c: lor.s() - (-mean[0] * sin + mean[1] * cos),
                phi: lor.phi(),
            }
        })
        .collect()
}
