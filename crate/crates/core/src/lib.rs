//! Gaussian mixture reconstruction from 2D lines of response.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod io;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod projection;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{GaussianComponent2D, LineOfResponse, MembershipMatrix, MixtureModel2D};
