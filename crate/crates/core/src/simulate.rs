//! Monte-Carlo generation of lines of response from a ground-truth mixture.
//!
//! Each event draws an annihilation point from its component, then an angle
//! uniform on `[-pi/2, pi/2)`, and records the line through the point at that
//! angle. Generation is a single sequential stream of [`EventRng`] draws, so
//! a seed fixes the dataset bit for bit.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::model::{GaussianComponent2D, LineOfResponse, MixtureModel2D};
use crate::rng::{EventRng, Stream};

/// How many events each component emits.
#[derive(Debug, Clone, PartialEq)]
pub enum EventCounts {
    /// Exact count per component.
    PerComponent(Vec<u64>),
    /// Total count, split by the truth weights (largest remainder).
    Total(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub truth: MixtureModel2D,
    pub counts: EventCounts,
    pub seed: u64,
    pub shuffle: bool,
}

impl SimulationConfig {
    pub fn new(truth: MixtureModel2D, counts: EventCounts, seed: u64) -> Self {
        Self {
            truth,
            counts,
            seed,
            shuffle: false,
        }
    }

    /// Per-component counts after resolving [`EventCounts::Total`].
    pub fn resolved_counts(&self) -> Result<Vec<u64>> {
        let k = self.truth.len();
        let counts = match &self.counts {
            EventCounts::PerComponent(c) => {
                if c.len() != k {
                    return Err(Error::SizeMismatch(c.len(), k));
                }
                c.clone()
            }
            EventCounts::Total(n) => apportion(*n, &self.truth.weights()),
        };
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidConfig("at least one event count must be positive".into()));
        }
        Ok(counts)
    }
}

/// Largest-remainder split of `total` proportional to `weights`.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable: equal remainders go to the lower index
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &k in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[k] += 1;
    }
    counts
}

/// Simulated events with the hidden component of each one.
#[derive(Debug, Clone, PartialEq)]
pub struct LoRDataset {
    pub lors: Vec<LineOfResponse>,
    pub truth_labels: Option<Vec<usize>>,
}

impl LoRDataset {
    pub fn len(&self) -> usize {
        self.lors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lors.is_empty()
    }

    /// Number of events carrying each label in `0..k`.
    pub fn label_histogram(&self, k: usize) -> Option<Vec<usize>> {
        let labels = self.truth_labels.as_ref()?;
        let mut hist = vec![0; k];
        for &l in labels {
            hist[l] += 1;
        }
        Some(hist)
    }
}

/// Lower Cholesky factor of a PSD 2x2 matrix.
fn cholesky(cov: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l11 = cov[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov[1][0] / l11 } else { 0.0 };
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

/// Draws one annihilation point from `component` and fires a line through it.
pub fn sample_event(component: &GaussianComponent2D, rng: &mut EventRng) -> LineOfResponse {
    let l = cholesky(&component.cov());
    let mean = component.mean();
    let (z1, z2) = rng.normal_pair();
    let x = mean[0] + l[0][0] * z1;
    let y = mean[1] + l[1][0] * z1 + l[1][1] * z2;
    let phi = rng.uniform_in(-FRAC_PI_2, FRAC_PI_2);
    let (sin, cos) = phi.sin_cos();
    LineOfResponse::new(-x * sin + y * cos, phi)
}

/// Generates the full dataset: component-blocked, optionally shuffled.
pub fn generate(config: &SimulationConfig) -> Result<LoRDataset> {
    let counts = config.resolved_counts()?;
    let total: u64 = counts.iter().sum();
    let mut rng = EventRng::new(config.seed, Stream::Simulation);
    let mut lors = Vec::with_capacity(total as usize);
    let mut labels = Vec::with_capacity(total as usize);
    for (k, (component, &n)) in config.truth.components().iter().zip(&counts).enumerate() {
        for _ in 0..n {
            lors.push(sample_event(component, &mut rng));
            labels.push(k);
        }
    }
    if config.shuffle {
        let mut order: Vec<usize> = (0..lors.len()).collect();
        EventRng::new(config.seed, Stream::Shuffle).shuffle(&mut order);
        lors = order.iter().map(|&i| lors[i]).collect();
        labels = order.iter().map(|&i| labels[i]).collect();
    }
    Ok(LoRDataset {
        lors,
        truth_labels: Some(labels),
    })
}
