//! Accuracy of a fitted mixture against its ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GaussianComponent2D, MixtureModel2D, Vec2, MIN_DETERMINANT};

/// Largest K handled by the exhaustive matcher.
pub const MAX_MATCH_COMPONENTS: usize = 8;
/// Cells per axis of the default KL quadrature grid.
pub const KL_GRID: usize = 512;
/// Half-width of the KL domain in units of the widest standard deviation.
pub const KL_BOX_SIGMAS: f64 = 6.0;
/// Density floor inside the KL logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Errors of one matched component pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    /// Euclidean distance between the means.
    pub mean_error: f64,
    /// Frobenius norm of the covariance difference.
    pub cov_error: f64,
    /// Absolute weight difference.
    pub weight_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `permutation[j]` is the estimated component matched to truth component `j`.
    pub permutation: Vec<usize>,
    /// Errors ordered by truth component.
    pub components: Vec<ComponentErrors>,
    pub kl_divergence: f64,
}

fn mean_error(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cov_error(a: &GaussianComponent2D, b: &GaussianComponent2D) -> f64 {
    let (x, y) = (a.cov(), b.cov());
    let mut sum = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            sum += (x[i][j] - y[i][j]).powi(2);
        }
    }
    sum.sqrt()
}

fn for_each_permutation(k: usize, f: &mut dyn FnMut(&[usize])) {
    // lexicographic order
    fn recurse(prefix: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if prefix.len() == used.len() {
            f(prefix);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                recurse(prefix, used, f);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    recurse(&mut Vec::with_capacity(k), &mut vec![false; k], f);
}

/// Assignment of estimated to truth components with the smallest summed mean
/// error; ties go to the smaller summed covariance error, then to the
/// lexicographically first permutation.
pub fn match_components(estimated: &MixtureModel2D, truth: &MixtureModel2D) -> Result<Vec<usize>> {
    let k = truth.len();
    if estimated.len() != k {
        return Err(Error::SizeMismatch(estimated.len(), k));
    }
    if k > MAX_MATCH_COMPONENTS {
        return Err(Error::InvalidConfig(format!("matching supports at most {MAX_MATCH_COMPONENTS} components")));
    }
    let (est, tru) = (estimated.components(), truth.components());
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for_each_permutation(k, &mut |perm| {
        let mut me = 0.0;
        let mut ce = 0.0;
        for (j, &e) in perm.iter().enumerate() {
            me += mean_error(est[e].mean(), tru[j].mean());
            ce += cov_error(&est[e], &tru[j]);
        }
        let better = match &best {
            None => true,
            Some((bm, bc, _)) => me < *bm || (me == *bm && ce < *bc),
        };
        if better {
            best = Some((me, ce, perm.to_vec()));
        }
    });
    Ok(best.expect("k >= 1").2)
}

/// Per-pair errors for `permutation` as returned by [`match_components`].
pub fn parameter_errors(
    estimated: &MixtureModel2D,
    truth: &MixtureModel2D,
    permutation: &[usize],
) -> Vec<ComponentErrors> {
    let est = estimated.components();
    truth
        .components()
        .iter()
        .zip(permutation)
        .map(|(t, &e)| ComponentErrors {
            mean_error: mean_error(est[e].mean(), t.mean()),
            cov_error: cov_error(&est[e], t),
            weight_error: (est[e].weight() - t.weight()).abs(),
        })
        .collect()
}

/// Precomputed evaluator of a mixture density.
struct DensityEvaluator {
    terms: Vec<(Vec2, [f64; 3], f64)>,
}

impl DensityEvaluator {
    fn new(model: &MixtureModel2D) -> Result<Self> {
        let terms = model
            .components()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let [[a, b], [_, d]] = c.cov();
                let det = a * d - b * b;
                if det <= MIN_DETERMINANT {
                    return Err(Error::SingularCovariance { component: k, det });
                }
                let norm = c.weight() / (2.0 * std::f64::consts::PI * det.sqrt());
                Ok((c.mean(), [d / det, -b / det, a / det], norm))
            })
            .collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, inv, norm)| {
                let (dx, dy) = (x - m[0], y - m[1]);
                let q = inv[0] * dx * dx + 2.0 * inv[1] * dx * dy + inv[2] * dy * dy;
                norm * (-0.5 * q).exp()
            })
            .sum()
    }
}

/// Axis-aligned box covering every mean of both models by `sigmas` times the
/// widest standard deviation of any component.
pub fn bounding_box(models: &[&MixtureModel2D], sigmas: f64) -> ([f64; 2], [f64; 2]) {
    let widest = models
        .iter()
        .flat_map(|m| m.components())
        .map(|c| c.max_sigma())
        .fold(0.0, f64::max);
    let pad = sigmas * widest;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in models.iter().flat_map(|m| m.components()) {
        for i in 0..2 {
            lo[i] = lo[i].min(c.mean()[i] - pad);
            hi[i] = hi[i].max(c.mean()[i] + pad);
        }
    }
    (lo, hi)
}

/// `D_KL(estimated || truth)` by the midpoint rule on a `grid x grid` lattice.
pub fn kl_divergence_with_grid(estimated: &MixtureModel2D, truth: &MixtureModel2D, grid: usize) -> Result<f64> {
    let p = DensityEvaluator::new(estimated)?;
    let q = DensityEvaluator::new(truth)?;
    let (lo, hi) = bounding_box(&[estimated, truth], KL_BOX_SIGMAS);
    let hx = (hi[0] - lo[0]) / grid as f64;
    let hy = (hi[1] - lo[1]) / grid as f64;
    let mut total = 0.0;
    for i in 0..grid {
        let x = lo[0] + (i as f64 + 0.5) * hx;
        let mut row = 0.0;
        for j in 0..grid {
            let y = lo[1] + (j as f64 + 0.5) * hy;
            let pv = p.eval(x, y);
            if pv > 0.0 {
                row += pv * (pv.max(DENSITY_FLOOR) / q.eval(x, y).max(DENSITY_FLOOR)).ln();
            }
        }
        total += row;
    }
    Ok(total * hx * hy)
}

pub fn kl_divergence(estimated: &MixtureModel2D, truth: &MixtureModel2D) -> Result<f64> {
    kl_divergence_with_grid(estimated, truth, KL_GRID)
}

/// Matches, scores and compares the two models.
pub fn evaluate(estimated: &MixtureModel2D, truth: &MixtureModel2D) -> Result<FitReport> {
    let permutation = match_components(estimated, truth)?;
    let components = parameter_errors(estimated, truth, &permutation);
    let kl_divergence = kl_divergence(estimated, truth)?;
    Ok(FitReport {
        permutation,
        components,
        kl_divergence,
    })
}
