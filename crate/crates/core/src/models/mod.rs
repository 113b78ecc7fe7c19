//! The skew-product model class on `T^3 = T^2 x S^1`.
//!
//! Systems are circle extensions of a hyperbolic toral automorphism, so the
//! center foliation is the fiber foliation and the center bundle is the
//! constant direction `(0, 0, 1)`.

mod point;
mod preset;
mod splitting;
mod system;

use thiserror::Error;

pub use point::TorusPoint;
pub use preset::{Preset, PresetEntry, PresetFile, PresetLibrary};
pub use splitting::{
    compute_splitting, cone_check, line_angle, verify_partial_hyperbolicity, HyperbolicityReport,
    SplittingFrame, DEFAULT_CONE_WIDTH, DEFAULT_SPLITTING_DEPTH, SPLITTING_TOL,
};
pub use system::{BaseEigen, FiberTerm, SkewProductSystem, SystemConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("base matrix must have determinant 1, got {det}")]
    NotUnimodular { det: i64 },
    #[error("base matrix is not hyperbolic: |trace| = {} <= 2", trace.abs())]
    NotHyperbolic { trace: i64 },
    #[error("nonlinearity amplitude {0} must satisfy |a| < 1")]
    NonlinearityOutOfRange(f64),
    #[error("fiber translation amplitudes must be finite")]
    InvalidTerm,
    #[error("fiber inverse did not converge at {0}")]
    FiberInverseFailed(f64),
    #[error("{direction} direction did not converge at depth {depth} (gap {gap:.3e})")]
    SplittingNotConverged {
        direction: &'static str,
        depth: usize,
        gap: f64,
    },
    #[error("splitting depth must be at least 1")]
    InvalidDepth,
    #[error("sample count and iterate must be positive")]
    InvalidSampleCount,
    #[error("curve samples too sparse: gap {gap:.3e} >= 1e-2")]
    SamplesTooSparse { gap: f64 },
    #[error("splitting frame is degenerate")]
    DegenerateFrame,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("config error: {0}")]
    Config(String),
}
