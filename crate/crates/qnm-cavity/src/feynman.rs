//! Zero-temperature Feynman propagators of the cavity field.
//!
//! G̃F(x,y,ω) is even in ω and equals G̃ᴿ(x,y,|ω|); every representation
//! here is a function of the slot s = |ω|, which is continued to s = -ω
//! (the advanced branch) or to complex s (residues) when consistency
//! checks demand it. Besides the exact closed rod form there are the
//! diagonal and non-diagonal mode sums and the two single-resonance
//! approximations: the pair-kept form preserves both Im D̃ ≤ 0 and the
//! retarded/advanced conjugation identity, the single-term form violates
//! both.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::{positive_family, retarded_green_exact_with, sample_modes};
use crate::profiles::{CavityProfile, DielectricRod};
use crate::series::SeriesConfig;
use crate::spectrum::{HomogeneousSolutions, QnmMode};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Representations of G̃F.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorForm {
    /// -i n0 Σ_jk f_j(a⁺)f_k(a⁺)/[2ω_jω_k(ω_j+ω_k)] ×
    /// {θ(ω) ω_j/(ω_j-ω) + θ(-ω) ω_k/(ω_k+ω)} f_j(x)f_k(y).
    NonDiagonal,
    /// ½ Σ_j f_j(x)f_j(y) / [ω_j(|ω|-ω_j)]. At x = y the constant part
    /// of f_j(x)f_j(y) leaves a monotone 1/N truncation tail; off the
    /// diagonal every term oscillates in j and the tail is 1/N².
    Diagonal,
    /// ½ Σ_j f_j(x)f_j(y) / [|ω|(|ω|-ω_j)]; diverges at ω = 0.
    DiagonalAlt,
    /// Wronskian construction evaluated at |ω| (exact for any profile,
    /// closed form for the rod).
    ClosedRod,
}

/// Guard band around the |ω| = Re ω_j pole lines of the mode sums.
const POLE_GUARD: f64 = 1e-6;

fn check_pole_guard(modes: &[QnmMode], s: f64) -> Result<()> {
    for m in modes {
        if (s.abs() - m.omega.re).abs() < POLE_GUARD {
            return Err(Error::NearPole(m.omega));
        }
    }
    Ok(())
}

/// G̃F(x,y,ω) at T = 0 in the requested representation.
pub fn feynman(
    form: PropagatorForm,
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega: f64,
    config: &SeriesConfig,
) -> Result<Complex64> {
    match form {
        PropagatorForm::ClosedRod => {
            let hom = HomogeneousSolutions::new(profile)?;
            retarded_green_exact_with(&hom, x, y, Complex64::new(omega.abs(), 0.0))
        }
        PropagatorForm::Diagonal => {
            check_pole_guard(modes, omega)?;
            let s = Complex64::new(omega.abs(), 0.0);
            let samples = sample_modes(&positive_family(modes, config.qnm_terms), profile, x, y)?;
            let mut acc = Complex64::new(0.0, 0.0);
            for m in &samples {
                acc += m.paired(|wj, fx, fy, _| fx * fy / (wj * (s - wj)));
            }
            Ok(acc / 2.0)
        }
        PropagatorForm::DiagonalAlt => {
            if omega.abs() < POLE_GUARD {
                return Err(Error::PoleAt(0.0));
            }
            check_pole_guard(modes, omega)?;
            let s = Complex64::new(omega.abs(), 0.0);
            let samples = sample_modes(&positive_family(modes, config.qnm_terms), profile, x, y)?;
            let mut acc = Complex64::new(0.0, 0.0);
            for m in &samples {
                acc += m.paired(|wj, fx, fy, _| fx * fy / (s * (s - wj)));
            }
            Ok(acc / 2.0)
        }
        PropagatorForm::NonDiagonal => {
            check_pole_guard(modes, omega)?;
            nondiagonal_sum(modes, profile, x, y, omega, config)
        }
    }
}

fn nondiagonal_sum(
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega: f64,
    config: &SeriesConfig,
) -> Result<Complex64> {
    let theta = if omega > 0.0 {
        1.0
    } else if omega == 0.0 {
        0.5
    } else {
        0.0
    };
    let w = Complex64::new(omega, 0.0);
    let xs = sample_modes(&positive_family(modes, config.qnm_terms), profile, x, y)?;
    // expand each positive mode into (mode, partner) legs
    let mut legs: Vec<(Complex64, Complex64, Complex64, Complex64)> = Vec::new();
    for m in &xs {
        legs.push((m.omega, m.fx, m.fy, m.fa));
        if !m.self_paired {
            legs.push((-m.omega.conj(), m.fx.conj(), m.fy.conj(), m.fa.conj()));
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &(wj, fjx, _, fja) in &legs {
        for &(wk, _, fky, fka) in &legs {
            let bracket = theta * wj / (wj - w) + (1.0 - theta) * wk / (wk + w);
            acc += fja * fka / (2.0 * wj * wk * (wj + wk)) * bracket * fjx * fky;
        }
    }
    Ok(-I * profile.n_out() * acc)
}

/// Equal-space propagator D̃(ω) = G̃F(x,x,ω).
pub fn equal_space_propagator(
    form: PropagatorForm,
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    omega: f64,
    config: &SeriesConfig,
) -> Result<Complex64> {
    feynman(form, modes, profile, x, x, omega, config)
}

/// Single-resonance approximations to D̃(ω) near |ω| ≈ Re ω_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceKind {
    /// Both members of the (j,-j) pair:
    /// n0 |f_j(x)f_j(a⁺)|²/(4|ω_j|²γ) [ω_j/(|ω|-ω_j) - ω_j*/(|ω|+ω_j*)].
    Ra,
    /// A single diagonal term, f_j(x)²/[2ω_j(|ω|-ω_j)].
    RaPrime,
}

/// D approximants as analytic functions of the slot s (= |ω| on the
/// physical branch); complex s reaches the pole for residue extraction.
pub fn resonance_approx_slot(
    kind: ResonanceKind,
    mode: &QnmMode,
    profile: &CavityProfile,
    x: f64,
    s: Complex64,
) -> Result<Complex64> {
    let fx = mode.evaluate(profile, x)?;
    let wj = mode.omega;
    match kind {
        ResonanceKind::Ra => {
            let c = profile.n_out() * (fx * mode.surface_value).norm_sqr()
                / (4.0 * wj.norm_sqr() * mode.gamma());
            Ok(c * (wj / (s - wj) - wj.conj() / (s + wj.conj())))
        }
        ResonanceKind::RaPrime => Ok(fx * fx / (2.0 * wj * (s - wj))),
    }
}

/// D_ra or D_ra' at real ω.
pub fn resonance_approx_d(
    kind: ResonanceKind,
    mode: &QnmMode,
    profile: &CavityProfile,
    x: f64,
    omega: f64,
) -> Result<Complex64> {
    resonance_approx_slot(kind, mode, profile, x, Complex64::new(omega.abs(), 0.0))
}

/// Residual of the retarded/advanced relation D̃ᴿ(ω) = [D̃ᴬ(ω)]* for
/// real ω > 0: the retarded branch is the slot form at s = +ω, the
/// advanced branch its continuation from negative frequencies, s = -ω.
pub fn check_retarded_advanced(
    form: PropagatorForm,
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    omega: f64,
    config: &SeriesConfig,
) -> Result<f64> {
    let d_slot = |s: f64| -> Result<Complex64> {
        match form {
            PropagatorForm::ClosedRod => {
                let hom = HomogeneousSolutions::new(profile)?;
                retarded_green_exact_with(&hom, x, x, Complex64::new(s, 0.0))
            }
            PropagatorForm::Diagonal
            | PropagatorForm::DiagonalAlt
            | PropagatorForm::NonDiagonal => {
                let samples =
                    sample_modes(&positive_family(modes, config.qnm_terms), profile, x, x)?;
                let sc = Complex64::new(s, 0.0);
                let mut acc = Complex64::new(0.0, 0.0);
                for m in &samples {
                    acc += m.paired(|wj, fx, fy, _| fx * fy / (wj * (sc - wj)));
                }
                Ok(acc / 2.0)
            }
        }
    };
    Ok((d_slot(omega)? - d_slot(-omega)?.conj()).norm())
}

/// Same check for the single-resonance approximants.
pub fn check_retarded_advanced_resonance(
    kind: ResonanceKind,
    mode: &QnmMode,
    profile: &CavityProfile,
    x: f64,
    omega: f64,
) -> Result<f64> {
    let dp = resonance_approx_slot(kind, mode, profile, x, Complex64::new(omega, 0.0))?;
    let dm = resonance_approx_slot(kind, mode, profile, x, Complex64::new(-omega, 0.0))?;
    Ok((dp - dm.conj()).norm())
}

/// Residue of a slot function at the complex pole ω_j: 64-point
/// trapezoidal contour integral on a circle of radius 1e-3.
pub fn residue_at(
    f: impl Fn(Complex64) -> Result<Complex64>,
    pole: Complex64,
) -> Result<Complex64> {
    let r = 1e-3;
    let n = 64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let e = Complex64::from_polar(1.0, th);
        acc += f(pole + r * e)? * e;
    }
    Ok(acc * r / n as f64)
}

/// Fraction of non-diagonal kernel weight off the (j,-j) pairs,
/// Σ_{k≠-j} |Δ_jk| / Σ_{jk} |Δ_jk|. Vanishes in the conservative limit,
/// where mode indices decouple and the creation/annihilation picture is
/// restored.
pub fn offdiagonal_mass(
    modes: &[QnmMode],
    profile: &CavityProfile,
    omega: f64,
    config: &SeriesConfig,
) -> Result<f64> {
    let fam = positive_family(modes, config.qnm_terms);
    let samples = sample_modes(&fam, profile, 0.0, 0.0)?;
    // (ω, f(a⁺), conjugate leg?, family slot, self-paired?)
    let mut legs: Vec<(Complex64, Complex64, bool, usize, bool)> = Vec::new();
    for (i, m) in samples.iter().enumerate() {
        legs.push((m.omega, m.fa, false, i, m.self_paired));
        if !m.self_paired {
            legs.push((-m.omega.conj(), m.fa.conj(), true, i, false));
        }
    }
    let theta = if omega > 0.0 { 1.0 } else { 0.0 };
    let w = Complex64::new(omega, 0.0);
    let mut total = 0.0;
    let mut off = 0.0;
    for &(wj, fja, conj_j, fam_j, self_j) in &legs {
        for &(wk, fka, conj_k, fam_k, _) in &legs {
            let bracket = theta * wj / (wj - w) + (1.0 - theta) * wk / (wk + w);
            let weight = (fja * fka / (2.0 * wj * wk * (wj + wk)) * bracket).norm();
            total += weight;
            // the (j,-j) frequency pair; a self-paired mode is its own partner
            let is_pair = fam_j == fam_k && (conj_j != conj_k || self_j);
            if !is_pair {
                off += weight;
            }
        }
    }
    Ok(off / total)
}

/// Closed equal-space rod form, for cross-checks:
/// G̃F(x,y,ω) = -sin(nωx)[n cos(nω(a-y)) - i n0 sin(n|ω|(a-y))]
///             / {nω [n cos(nωa) - i n0 sin(n|ω|a)]}, x ≤ y.
pub fn feynman_closed_rod(rod: &DielectricRod, x: f64, y: f64, omega: f64) -> Complex64 {
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    let (xm, xx) = (x.min(y), x.max(y));
    let aw = omega.abs();
    let num =
        n * (n * omega * (a - xx)).cos() - I * n0 * Complex64::new((n * aw * (a - xx)).sin(), 0.0);
    let den = n * (n * omega * a).cos() - I * n0 * Complex64::new((n * aw * a).sin(), 0.0);
    -Complex64::new((n * omega * xm).sin(), 0.0) / (n * omega) * num / den
}
