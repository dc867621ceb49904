use crate::error::Result;
use crate::model::{LineOfResponse, MembershipMatrix, MixtureModel2D};
use crate::projection::log_line_integral_density;

/// Soft memberships together with the log-likelihood proxy of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipUpdate {
    pub memberships: MembershipMatrix,
    /// `sum_i ln sum_k w_k * line_integral_k(i)`.
    pub loglik: f64,
}

/// Responsibilities `p_ik` proportional to `w_k` times the line integral of
/// component `k` along event `i`, normalized per event.
///
/// Evaluated in log space with max-subtraction, so events far from every
/// component still get a proper distribution. A row with no finite term
/// falls back to uniform.
pub fn update_memberships(model: &MixtureModel2D, lors: &[LineOfResponse]) -> Result<MembershipUpdate> {
    let k = model.len();
    let log_weights: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let mut entries = Vec::with_capacity(lors.len() * k);
    let mut logs = vec![0.0; k];
    let mut loglik = 0.0;
    for lor in lors {
        for (j, c) in model.components().iter().enumerate() {
            logs[j] = log_weights[j] + log_line_integral_density(c, lor)?;
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            entries.extend(std::iter::repeat_n(1.0 / k as f64, k));
            continue;
        }
        let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        entries.extend(logs.iter().map(|l| (l - max).exp() / total));
        loglik += max + total.ln();
    }
    Ok(MembershipUpdate {
        memberships: MembershipMatrix::new(lors.len(), k, entries)?,
        loglik,
    })
}
