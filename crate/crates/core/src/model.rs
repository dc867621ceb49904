//! Mixture model types, lines of response, memberships and direct density
//! evaluation.
//!
//! Matrices are plain row-major `[[f64; 2]; 2]` values. Angles follow one
//! convention throughout the crate: a line of response at angle `phi` runs
//! along `(cos phi, sin phi)` and its oriented distance `s` is measured along
//! the normal `n = (-sin phi, cos phi)`, so a point `x` lies on the line
//! `(s, phi)` with `s = n . x`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Absolute tolerance for the symmetry check on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Determinants at or below this are treated as singular.
pub const MIN_DETERMINANT: f64 = 1e-300;

pub(crate) fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Maps an angle onto `(-pi/2, pi/2]`, the period of an ellipse orientation.
pub fn canonical_orientation(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(PI);
    if a > FRAC_PI_2 {
        a -= PI;
    }
    // rem_euclid can land exactly on PI for tiny negative inputs
    if a <= -FRAC_PI_2 {
        a += PI;
    }
    a
}

/// One bivariate normal component with its mixture weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent2D {
    mean: Vec2,
    cov: Mat2,
    weight: f64,
}

impl GaussianComponent2D {
    pub fn new(mean: Vec2, cov: Mat2, weight: f64) -> Result<Self> {
        if !(mean[0].is_finite() && mean[1].is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite mean {mean:?}")));
        }
        if cov.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite covariance {cov:?}")));
        }
        let asym = (cov[0][1] - cov[1][0]).abs();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        // PSD for a symmetric 2x2: nonnegative diagonal and determinant.
        if cov[0][0] < 0.0 || cov[1][1] < 0.0 || det2(&cov) < -SYMMETRY_TOL {
            return Err(Error::InvalidModel(format!(
                "covariance is not positive semidefinite: {cov:?}"
            )));
        }
        if !(weight > 0.0 && weight <= 1.0 + WEIGHT_SUM_TOL) {
            return Err(Error::InvalidModel(format!("weight {weight} outside (0, 1]")));
        }
        Ok(Self { mean, cov, weight })
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    pub fn cov(&self) -> Mat2 {
        self.cov
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(self.mean, self.cov, weight)
    }

    /// Natural log of the bivariate normal density (without the weight).
    pub fn log_pdf(&self, index: usize, x: Vec2) -> Result<f64> {
        let det = det2(&self.cov);
        if det <= MIN_DETERMINANT {
            return Err(Error::SingularCovariance {
                component: index,
                det,
            });
        }
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        // inverse of [[a, b], [b, c]] is [[c, -b], [-b, a]] / det
        let [[a, b], [_, c]] = self.cov;
        let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        Ok(-0.5 * q - (2.0 * PI).ln() - 0.5 * det.ln())
    }

    /// Largest standard deviation along any direction.
    pub fn max_sigma(&self) -> f64 {
        let [[a, b], [_, c]] = self.cov;
        let half_diff = 0.5 * (a - c);
        let lambda = 0.5 * (a + c) + half_diff.hypot(b);
        lambda.max(0.0).sqrt()
    }
}

/// A normalized mixture of `K >= 1` bivariate normal components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel2D {
    components: Vec<GaussianComponent2D>,
}

impl MixtureModel2D {
    pub fn new(components: Vec<GaussianComponent2D>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// Builds a mixture after rescaling the weights to sum to one.
    pub fn normalized(components: Vec<GaussianComponent2D>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidModel(format!("weight total {total}")));
        }
        let scaled = components
            .iter()
            .map(|c| GaussianComponent2D::new(c.mean, c.cov, c.weight / total))
            .collect::<Result<Vec<_>>>()?;
        Self::new(scaled)
    }

    pub fn components(&self) -> &[GaussianComponent2D] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Reorders components so that new component `j` is old component `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::SizeMismatch(order.len(), self.len()));
        }
        Self::new(order.iter().map(|&j| self.components[j]).collect())
    }
}

/// Mixture density `sum_k w_k N(x; mu_k, Sigma_k)`.
pub fn density(model: &MixtureModel2D, point: Vec2) -> Result<f64> {
    let mut total = 0.0;
    for (k, c) in model.components.iter().enumerate() {
        total += c.weight * c.log_pdf(k, point)?.exp();
    }
    Ok(total)
}

/// A measured event: oriented distance `s` and angle `phi` in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfResponse {
    s: f64,
    phi: f64,
}

impl LineOfResponse {
    /// Canonicalizes `phi` into `[-pi/2, pi/2]`; a half-turn flips the sign of `s`.
    pub fn new(s: f64, phi: f64) -> Self {
        let (mut s, mut phi) = (s, phi);
        if phi.is_finite() && phi.abs() > FRAC_PI_2 {
            let turns = ((phi + FRAC_PI_2) / PI).floor();
            phi -= turns * PI;
            if (turns as i64) % 2 != 0 {
                s = -s;
            }
            // guard the upper edge against rounding
            if phi > FRAC_PI_2 {
                phi -= PI;
                s = -s;
            }
        }
        Self { s, phi }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Oriented distance of the sinusoid traced by point `mean`: `-mx sin(phi) + my cos(phi)`.
pub fn sinusoid(phi: f64, mean: Vec2) -> f64 {
    let (sin, cos) = phi.sin_cos();
    -mean[0] * sin + mean[1] * cos
}

/// Row-stochastic `N x K` responsibilities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

pub const ROW_SUM_TOL: f64 = 1e-9;

impl MembershipMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if cols == 0 || entries.len() != rows * cols {
            return Err(Error::InvalidModel(format!(
                "membership shape {rows}x{cols} does not match {} entries",
                entries.len()
            )));
        }
        for (i, row) in entries.chunks(cols).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidModel(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { rows, cols, entries })
    }

    /// Hard assignment: row `i` is the indicator of `labels[i]`.
    pub fn one_hot(labels: &[usize], cols: usize) -> Result<Self> {
        let mut entries = vec![0.0; labels.len() * cols];
        for (i, &l) in labels.iter().enumerate() {
            if l >= cols {
                return Err(Error::InvalidModel(format!("label {l} out of range for K = {cols}")));
            }
            entries[i * cols + l] = 1.0;
        }
        Self::new(labels.len(), cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.entries.iter().skip(k).step_by(self.cols).copied().collect()
    }

    /// Column sums `L_k = sum_i p_ik`.
    pub fn masses(&self) -> Vec<f64> {
        let mut masses = vec![0.0; self.cols];
        for row in self.entries.chunks(self.cols) {
            for (m, p) in masses.iter_mut().zip(row) {
                *m += p;
            }
        }
        masses
    }

    /// Largest `|sum_k p_ik - 1|` over all rows.
    pub fn max_row_deviation(&self) -> f64 {
        self.entries
            .chunks(self.cols)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Principal variances and major-axis angle of a 2x2 covariance.
///
/// `sigma1_sq` lies along `u1 = (cos phi0, sin phi0)`, `sigma2_sq` along
/// `u2 = (-sin phi0, cos phi0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomposition2D {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub phi0: f64,
}

impl EigenDecomposition2D {
    pub fn new(sigma1_sq: f64, sigma2_sq: f64, phi0: f64) -> Result<Self> {
        if !(sigma2_sq >= 0.0 && sigma1_sq >= sigma2_sq) {
            return Err(Error::InvalidModel(format!(
                "eigenvalues must satisfy {sigma1_sq} >= {sigma2_sq} >= 0"
            )));
        }
        Ok(Self {
            sigma1_sq,
            sigma2_sq,
            phi0: canonical_orientation(phi0),
        })
    }

    /// Accepts the variances in either order, rotating the axis by a quarter
    /// turn when they have to be swapped.
    pub fn from_unordered(a: f64, b: f64, phi0: f64) -> Result<Self> {
        if a >= b {
            Self::new(a, b, phi0)
        } else {
            Self::new(b, a, phi0 + FRAC_PI_2)
        }
    }
}

/// `U diag(sigma1_sq, sigma2_sq) U^T` with `U = [u1 u2]`.
pub fn covariance_from_eigen(e: &EigenDecomposition2D) -> Mat2 {
    let (s, c) = e.phi0.sin_cos();
    let xx = e.sigma1_sq * c * c + e.sigma2_sq * s * s;
    let yy = e.sigma1_sq * s * s + e.sigma2_sq * c * c;
    let xy = (e.sigma1_sq - e.sigma2_sq) * s * c;
    [[xx, xy], [xy, yy]]
}

/// Closed-form eigensystem of a symmetric 2x2 matrix.
///
/// Isotropic input (eigenvalue gap within `1e-12` of the scale) gets `phi0 = 0`.
pub fn eigen_from_covariance(c: &Mat2) -> Result<EigenDecomposition2D> {
    let asym = (c[0][1] - c[1][0]).abs();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let [[a, b], [_, d]] = *c;
    let mid = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(b);
    let scale = a.abs().max(d.abs()).max(f64::MIN_POSITIVE);
    let lambda1 = mid + radius;
    // lambda1 * lambda2 = det avoids cancellation in the smaller eigenvalue
    let lambda2 = if lambda1 > 0.0 {
        (det2(c) / lambda1).min(lambda1)
    } else {
        mid - radius
    };
    let (lambda1, lambda2) = (lambda1.max(0.0), lambda2.max(0.0));
    if radius <= 1e-12 * scale {
        return EigenDecomposition2D::new(lambda1, lambda2.min(lambda1), 0.0);
    }
    EigenDecomposition2D::new(lambda1, lambda2, 0.5 * b.atan2(half_diff))
}
