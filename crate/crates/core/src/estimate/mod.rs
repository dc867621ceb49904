//! Parameter estimation from lines of response.

pub mod covariance;
pub mod driver;
pub mod mean;
pub mod membership;
pub mod quartic;

pub use covariance::{
    estimate_covariance, invert_moments, moments_from_offsets, refine_sigmas, solve_orientation, CovarianceEstimate,
    OrientationObjective, WeightedMoments,
};
pub use driver::{fit, fit_from_assignment, FitConfig, FitOutcome, FitState, Phase, StopReason, TraceRecord};
pub use mean::{center_offsets, fit_mean};
pub use membership::{update_memberships, MembershipUpdate};
pub use quartic::solve_quartic;
