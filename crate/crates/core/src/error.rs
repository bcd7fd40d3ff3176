//! Library-wide error type.

use thiserror::Error;

/// A single configuration rule violation, suitable for listing to a user.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Configuration key (or derived quantity) the rule concerns.
    pub key: String,
    /// Human-readable description of what is wrong.
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration is invalid:{}", .0.iter().map(|v| format!("\n  {v}")).collect::<String>())]
    InvalidConfig(Vec<Violation>),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("parameter out of range: {0}")]
    InvalidParameter(String),

    #[error(
        "grazing diffraction order: |alpha_{n}| = {alpha_n_abs} is within {guard} of kappa1 = {kappa1}; \
         the transparent boundary operator is undefined for this order (perturb omega or the period)"
    )]
    GrazingOrder {
        n: i64,
        alpha_n_abs: f64,
        kappa1: f64,
        guard: f64,
    },

    #[error("mode truncation {modes} requires at least {required} grid points across the period, got {nx}")]
    TruncationMismatch {
        modes: usize,
        required: usize,
        nx: usize,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("mesh quality below threshold: minimum triangle angle {min_angle_deg:.4} deg < {limit_deg} deg")]
    MeshQuality { min_angle_deg: f64, limit_deg: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "linear system is numerically singular (reciprocal condition estimate {rcond:.3e}); \
         the frequency may sit on an exceptional resonance - perturb omega slightly"
    )]
    SingularSystem { rcond: f64 },

    #[error("degenerate layer resonance in reference solution: order {n} determinant magnitude {det_mag:.3e}")]
    DegenerateLayer { n: i64, det_mag: f64 },

    #[error("reference solution unavailable: {0}")]
    OracleUnavailable(String),

    #[error("point ({x1}, {x2}) lies outside the slab 0 <= x2 <= {h1}")]
    PointOutsideRegion { x1: f64, x2: f64, h1: f64 },

    #[error("unsupported Sobolev order {0}; trace norms are defined for s = 1/2 and s = -1/2")]
    UnsupportedSobolevOrder(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
