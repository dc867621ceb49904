//! The three-component test phantom used throughout the tests, examples and
//! the replicate study: an isotropic blob at the origin, a tilted blob that
//! overlaps it, and a small well-separated elongated blob.

use crate::model::{GaussianComponent2D, MixtureModel2D};

/// Events emitted per component in the reference experiment.
pub const PHANTOM_COUNTS: [u64; 3] = [3500, 2500, 1000];

pub fn three_component() -> MixtureModel2D {
    let total: u64 = PHANTOM_COUNTS.iter().sum();
    let w = |n: u64| n as f64 / total as f64;
    let components = vec![
        GaussianComponent2D::new([0.0, 0.0], [[0.0625, 0.0], [0.0, 0.0625]], w(PHANTOM_COUNTS[0])),
        GaussianComponent2D::new([-0.4, -0.4], [[0.04, 0.03], [0.03, 0.09]], w(PHANTOM_COUNTS[1])),
        GaussianComponent2D::new([1.25, -1.0], [[0.04, 0.006], [0.006, 0.01]], w(PHANTOM_COUNTS[2])),
    ];
    MixtureModel2D::normalized(components.into_iter().map(|c| c.expect("valid phantom")).collect())
        .expect("valid phantom")
}
