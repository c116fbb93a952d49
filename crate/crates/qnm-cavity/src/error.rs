use num_complex::Complex64;
use thiserror::Error;

use crate::profiles::Violation;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Inside and outside densities coincide; the mode description breaks
    /// down because the boundary reflects nothing and every resonance is
    /// infinitely broad.
    #[error("inside and outside refractive indices coincide (infinite dissipation)")]
    InfiniteDissipation,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("profile violates its invariants: {0:?}")]
    InvalidProfile(Vec<Violation>),

    #[error("negative position x = {0}")]
    NegativePosition(f64),

    #[error("position x = {0} outside the cavity [0, {1}]")]
    OutsideCavity(f64, f64),

    #[error("field pairs are sampled on different grids")]
    GridMismatch,

    #[error("contour count {contour} disagrees with {found} refined roots")]
    RootCountMismatch { contour: usize, found: usize },

    #[error("no convergence: {0}")]
    NoConvergence(&'static str),

    /// The Wronskian is below threshold: the requested frequency sits on
    /// (or numerically indistinguishable from) a resonance pole.
    #[error("Wronskian vanishes near omega = {0}; treat as singular")]
    NearPole(Complex64),

    #[error("evaluation at a pole: omega = {0}")]
    PoleAt(f64),

    #[error("series tail {tail:e} exceeds tolerance {tol:e}")]
    TailTooLarge { tail: f64, tol: f64 },

    #[error("degenerate mode pair: omega_j + omega_k vanishes")]
    DegeneratePair,

    #[error("sampling too coarse: {0}")]
    UnderResolved(&'static str),

    #[error("zero argument")]
    ZeroArgument,

    #[error("integration window overlaps a neighboring resonance")]
    WindowOverlap,

    #[error("root bracketing failed: {0}")]
    BracketingFailed(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
