//! Quasinormal-mode toolkit for an open 1-d scalar cavity.
//!
//! The wave equation ρ(x) ∂²φ/∂t² = ∂²φ/∂x² on [0, a] with a node at 0
//! and outgoing waves beyond a has factorized eigensolutions
//! f_j(x) e^{-iω_j t} with Im ω_j < 0 — quasinormal modes. Everything the
//! leaky cavity does can be written as discrete sums over them: the
//! retarded Green's function, finite-temperature field correlators, the
//! local density of states, and Feynman propagators. This crate computes
//! the spectrum for piecewise-constant density profiles, normalizes modes
//! in the conjugation-free bilinear product, and builds each of those
//! spectral objects with machine-checkable identities connecting them to
//! exact Wronskian references.

pub mod dos;
pub mod error;
pub mod feynman;
pub mod greens;
pub mod profiles;
pub mod quadrature;
pub mod quantization;
pub mod series;
pub mod special;
pub mod spectrum;
pub mod thermal;
pub mod universe;

pub use error::{Error, Result};
pub use profiles::{make_dielectric_rod, CavityProfile, DielectricRod, Segment, Side};
pub use series::{SeriesConfig, SeriesResult, TailPolicy};
pub use spectrum::{
    bilinear_product, check_orthogonality, find_qnms, project_coefficient, rod_mode, rod_modes,
    rod_qnm_frequency, FieldPair, QnmMode, SearchWindow,
};
