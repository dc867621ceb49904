//! Two-phase iterative fit of a mixture to lines of response.
//!
//! Phase 1 starts from a seeded, balanced random hard assignment and
//! alternates mean fits with hard reassignment of every event to the
//! component whose sinusoid passes closest to it, then estimates one
//! covariance per component. Phase 2 iterates soft memberships, mean and
//! covariance updates, and weights `w_k = L_k / N`, until no weight moves by
//! more than `weight_tol`.

use serde::{Deserialize, Serialize};

use super::covariance::{estimate_covariance, DEFAULT_VARIANCE_FLOOR};
use super::mean::{center_offsets, fit_mean};
use super::membership::update_memberships;
use crate::error::{Error, Result};
use crate::model::{sinusoid, GaussianComponent2D, LineOfResponse, MembershipMatrix, MixtureModel2D, Vec2};
use crate::rng::{derive_seed, EventRng, Stream};

/// Minimum events per component accepted by [`fit`].
pub const MIN_EVENTS_PER_COMPONENT: usize = 5;
/// Iterations a component may stay below the mass threshold before the fit fails.
pub const COLLAPSE_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "defaults::max_iters_phase1")]
    pub max_iters_phase1: usize,
    #[serde(default = "defaults::max_iters_phase2")]
    pub max_iters_phase2: usize,
    #[serde(default = "defaults::weight_tol")]
    pub weight_tol: f64,
    #[serde(default = "defaults::mean_tol")]
    pub mean_tol: f64,
    #[serde(default = "defaults::variance_floor")]
    pub variance_floor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
}

mod defaults {
    pub fn max_iters_phase1() -> usize {
        50
    }
    pub fn max_iters_phase2() -> usize {
        200
    }
    pub fn weight_tol() -> f64 {
        1e-4
    }
    pub fn mean_tol() -> f64 {
        1e-6
    }
    pub fn variance_floor() -> f64 {
        super::DEFAULT_VARIANCE_FLOOR
    }
    pub fn restarts() -> usize {
        1
    }
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters_phase1: defaults::max_iters_phase1(),
            max_iters_phase2: defaults::max_iters_phase2(),
            weight_tol: defaults::weight_tol(),
            mean_tol: defaults::mean_tol(),
            variance_floor: defaults::variance_floor(),
            seed: 0,
            restarts: defaults::restarts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if !(self.weight_tol > 0.0 && self.mean_tol > 0.0 && self.variance_floor > 0.0) {
            return bad("tolerances and variance floor must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Hard = 1,
    Soft = 2,
}

/// Snapshot of the driver after an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub model: MixtureModel2D,
    pub memberships: MembershipMatrix,
    pub iteration: usize,
    pub phase: Phase,
    pub converged: bool,
}

/// One line of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: u8,
    pub weights: Vec<f64>,
    /// Log-likelihood proxy of the model entering the iteration (soft phase only).
    pub loglik_proxy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MixtureModel2D,
    pub state: FitState,
    pub trace: Vec<TraceRecord>,
    pub stop: StopReason,
    /// Log-likelihood proxy of the final model.
    pub loglik: f64,
    /// Restart that produced this outcome.
    pub restart: usize,
}

/// Seeded uniform random labels with counts differing by at most one.
pub fn balanced_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    EventRng::new(seed, Stream::Initialization).shuffle(&mut labels);
    labels
}

fn indicator(labels: &[usize], k: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect()
}

fn nearest_sinusoid(lor: &LineOfResponse, means: &[Vec2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, m) in means.iter().enumerate() {
        let d = (lor.s() - sinusoid(lor.phi(), *m)).abs();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

fn tag(err: Error, component: usize) -> Error {
    match err {
        Error::EmptyComponent(_) => Error::EmptyComponent(component),
        other => other,
    }
}

/// Mean and covariance of one component under the given weights.
fn estimate_component(lors: &[LineOfResponse], weights: &[f64], floor: f64, k: usize) -> Result<(Vec2, [[f64; 2]; 2])> {
    let mean = fit_mean(lors, weights).map_err(|e| tag(e, k))?;
    let offsets = center_offsets(lors, mean);
    let cov = estimate_covariance(&offsets, weights, floor).map_err(|e| tag(e, k))?;
    Ok((mean, cov.cov))
}

/// Fits `config.k` components, keeping the restart with the best final
/// log-likelihood proxy. Restart 0 uses `config.seed` directly.
pub fn fit(lors: &[LineOfResponse], config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    if lors.len() < MIN_EVENTS_PER_COMPONENT * config.k {
        return Err(Error::InvalidConfig(format!(
            "{} events are too few for {} components",
            lors.len(),
            config.k
        )));
    }
    let mut best: Option<FitOutcome> = None;
    let mut last_err = None;
    for restart in 0..config.restarts {
        let seed = if restart == 0 {
            config.seed
        } else {
            derive_seed(config.seed, restart as u64)
        };
        let labels = balanced_assignment(lors.len(), config.k, seed);
        match fit_from_assignment(lors, config, &labels, &mut |_| {}) {
            Ok(mut outcome) => {
                outcome.restart = restart;
                if best.as_ref().is_none_or(|b| outcome.loglik > b.loglik) {
                    best = Some(outcome);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Runs both phases from an explicit initial hard assignment, reporting the
/// state after phase 1 and after every soft iteration to `observer`.
pub fn fit_from_assignment(
    lors: &[LineOfResponse],
    config: &FitConfig,
    initial: &[usize],
    observer: &mut dyn FnMut(&FitState),
) -> Result<FitOutcome> {
    config.validate()?;
    let n = lors.len();
    let k = config.k;
    if initial.len() != n {
        return Err(Error::SizeMismatch(initial.len(), n));
    }
    if let Some(&bad) = initial.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidConfig(format!("initial label {bad} out of range")));
    }
    let mut trace = Vec::new();
    let mut labels = initial.to_vec();
    let mut previous: Option<Vec<Vec2>> = None;
    let mut iteration = 0;
    let means = loop {
        iteration += 1;
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::ComponentCollapsed {
                component: empty,
                mass: 0.0,
                iterations: iteration,
            });
        }
        let means = (0..k)
            .map(|j| fit_mean(lors, &indicator(&labels, j)).map_err(|e| tag(e, j)))
            .collect::<Result<Vec<_>>>()?;
        trace.push(TraceRecord {
            iter: iteration,
            phase: Phase::Hard as u8,
            weights: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            loglik_proxy: None,
        });
        let change = previous.as_ref().map(|prev| {
            prev.iter()
                .zip(&means)
                .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .fold(0.0, f64::max)
        });
        if change.is_some_and(|c| c < config.mean_tol) || iteration >= config.max_iters_phase1 {
            break means;
        }
        labels = lors.iter().map(|l| nearest_sinusoid(l, &means)).collect();
        previous = Some(means);
    };

    let memberships = MembershipMatrix::one_hot(&labels, k)?;
    let masses = memberships.masses();
    let mut components = Vec::with_capacity(k);
    for (j, mean) in means.iter().enumerate() {
        let weights = memberships.column(j);
        let offsets = center_offsets(lors, *mean);
        let cov = estimate_covariance(&offsets, &weights, config.variance_floor).map_err(|e| tag(e, j))?;
        components.push(GaussianComponent2D::new(*mean, cov.cov, masses[j] / n as f64)?);
    }
    let mut model = MixtureModel2D::new(components)?;
    observer(&FitState {
        model: model.clone(),
        memberships,
        iteration,
        phase: Phase::Hard,
        converged: false,
    });

    let threshold = n as f64 * 1e-3 / k as f64;
    let mut low_mass = vec![0usize; k];
    let mut stop = StopReason::MaxIterations;
    let mut loglik = f64::NEG_INFINITY;
    let mut last_state = None;
    for soft_iter in 1..=config.max_iters_phase2 {
        iteration += 1;
        let update = update_memberships(&model, lors)?;
        let masses = update.memberships.masses();
        let mut components = Vec::with_capacity(k);
        for (j, old) in model.components().iter().enumerate() {
            let (mean, cov) = if masses[j] < threshold {
                low_mass[j] += 1;
                if low_mass[j] >= COLLAPSE_PATIENCE {
                    return Err(Error::ComponentCollapsed {
                        component: j,
                        mass: masses[j],
                        iterations: low_mass[j],
                    });
                }
                (old.mean(), old.cov())
            } else {
                low_mass[j] = 0;
                estimate_component(lors, &update.memberships.column(j), config.variance_floor, j)?
            };
            let weight = (masses[j] / n as f64).max(f64::MIN_POSITIVE);
            components.push(GaussianComponent2D::new(mean, cov, weight)?);
        }
        let next = MixtureModel2D::new(components)?;
        let delta = model
            .weights()
            .iter()
            .zip(next.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.push(TraceRecord {
            iter: iteration,
            phase: Phase::Soft as u8,
            weights: next.weights(),
            loglik_proxy: Some(update.loglik),
        });
        loglik = update.loglik;
        model = next;
        let converged = delta < config.weight_tol;
        let state = FitState {
            model: model.clone(),
            memberships: update.memberships,
            iteration: soft_iter,
            phase: Phase::Soft,
            converged,
        };
        observer(&state);
        last_state = Some(state);
        if converged {
            stop = StopReason::Converged;
            break;
        }
    }
    let state = match last_state {
        Some(s) => s,
        None => {
            let update = update_memberships(&model, lors)?;
            loglik = update.loglik;
            FitState {
                model: model.clone(),
                memberships: update.memberships,
                iteration: 0,
                phase: Phase::Soft,
                converged: false,
            }
        }
    };
    Ok(FitOutcome {
        model,
        state,
        trace,
        stop,
        loglik,
        restart: 0,
    })
}
