use thiserror::Error;

/// Errors raised by the reconstruction pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("covariance of component {component} is singular (det = {det:e})")]
    SingularCovariance { component: usize, det: f64 },

    #[error("degenerate projection variance {0:e}")]
    DegenerateProjection(f64),

    #[error("matrix is not symmetric (|b - c| = {0:e})")]
    NotSymmetric(f64),

    #[error("degenerate geometry: normal matrix condition number {0:e}")]
    DegenerateGeometry(f64),

    #[error("component {0} has zero membership mass")]
    EmptyComponent(usize),

    #[error("component {component} collapsed (mass {mass:e} below threshold for {iterations} iterations)")]
    ComponentCollapsed {
        component: usize,
        mass: f64,
        iterations: usize,
    },

    #[error("no stationary orientation found")]
    NoOrientation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model size mismatch: {0} vs {1} components")]
    SizeMismatch(usize, usize),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. }
                | Error::DegenerateProjection(_)
                | Error::DegenerateGeometry(_)
                | Error::EmptyComponent(_)
                | Error::ComponentCollapsed { .. }
                | Error::NoOrientation
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
