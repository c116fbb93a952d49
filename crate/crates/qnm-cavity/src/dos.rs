//! Local density of states d(x,ω) and the unit weight of narrow
//! resonances.
//!
//! For real ω > 0, d(x,ω) = -(2ω/π) Im G̃ᴿ(x,x,ω). The mode expansions
//! give a diagonal sum (not positive term by term) and a non-diagonal
//! double sum whose single-resonance truncation is a positive Lorentzian;
//! the latter is what makes "each resonance carries one state" a theorem
//! rather than folklore: ∫dω ∫dx ρ d over one narrow resonance → 1 up to
//! O(γ) corrections.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::{retarded_green_exact_with, sample_modes};
use crate::profiles::CavityProfile;
use crate::quadrature::{integrate_panels, panels_for};
use crate::series::SeriesConfig;
use crate::spectrum::{HomogeneousSolutions, QnmMode};
use crate::thermal::surface_response_chi;

/// Which representation of d(x,ω) to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DosSource {
    /// -(2ω/π) Im G̃ᴿ(x,x,ω) from the Wronskian Green's function.
    Exact,
    /// (ω/π) Σ_j Im f_j²(x)/[ω_j(ω_j-ω)].
    Diagonal,
    /// (n0/2π) Σ_jk f_j(a⁺)f_k(a⁺) f_j(x)f_k(x)/[(ω-ω_j)(ω+ω_k)].
    NonDiagonal,
}

/// Integration window around one resonance.
#[derive(Debug, Clone, Copy)]
pub struct ResonanceWindow {
    pub center: f64,
    pub halfwidth: f64,
}

impl ResonanceWindow {
    /// Default window: ±10γ around Re ω_j, which holds ≳93% of the
    /// Lorentzian mass; the remainder is restored analytically.
    pub fn for_mode(mode: &QnmMode) -> Self {
        ResonanceWindow {
            center: mode.omega.re,
            halfwidth: 10.0 * mode.gamma(),
        }
    }
}

/// d(x,ω) for real positive ω from the chosen representation.
pub fn local_dos(
    source: DosSource,
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    omega: f64,
    config: &SeriesConfig,
) -> Result<f64> {
    if omega <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "density of states defined for omega > 0, got {omega}"
        )));
    }
    let pi = std::f64::consts::PI;
    match source {
        DosSource::Exact => {
            let hom = HomogeneousSolutions::new(profile)?;
            let g = retarded_green_exact_with(&hom, x, x, Complex64::new(omega, 0.0))?;
            Ok(-2.0 * omega / pi * g.im)
        }
        DosSource::Diagonal => {
            let samples = sample_modes(
                &crate::greens::positive_family(modes, config.qnm_terms),
                profile,
                x,
                x,
            )?;
            let w = Complex64::new(omega, 0.0);
            let mut acc = 0.0;
            for s in &samples {
                acc += s.paired(|wj, fx, _, _| fx * fx / (wj * (wj - w))).im;
            }
            Ok(omega / pi * acc)
        }
        DosSource::NonDiagonal => {
            // the double sum factorizes; partial-fraction regrouping
            // through Σ f_j f_j/ω_j = 0 turns the 1/ω_j kernel into the
            // absolutely convergent χ form:
            // d = (n0 ω²/2π) χ(x,ω) χ(x,-ω) = (n0 ω²/2π) |χ(x,ω)|²
            let chi_p = surface_response_chi(modes, profile, x, omega, config)?.value;
            let chi_m = surface_response_chi(modes, profile, x, -omega, config)?.value;
            Ok((profile.n_out() * omega * omega / (2.0 * pi) * chi_p * chi_m).re)
        }
    }
}

/// Single-resonance approximations to d(x,ω).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceApprox {
    /// One term of the diagonal sum; not positive definite.
    Diagonal,
    /// The (j,-j) pair of the non-diagonal sum: a positive Lorentzian.
    Lorentzian,
}

/// Single-resonance density of states near Re ω_j.
pub fn dos_resonance_approx(
    kind: ResonanceApprox,
    mode: &QnmMode,
    profile: &CavityProfile,
    x: f64,
    omega: f64,
) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let fx = mode.evaluate(profile, x)?;
    match kind {
        ResonanceApprox::Diagonal => {
            let w = Complex64::new(omega, 0.0);
            Ok(omega / pi * (fx * fx / (mode.omega * (mode.omega - w))).im)
        }
        ResonanceApprox::Lorentzian => {
            let num = (mode.surface_value * fx).norm_sqr();
            let dw = omega - mode.omega.re;
            let g = mode.gamma();
            Ok(profile.n_out() * num / (2.0 * pi * (dw * dw + g * g)))
        }
    }
}

/// Weight carried by one resonance:
/// ∫_window dω ∫₀^{a⁺} dx ρ(x) d_lorentzian(x,ω), with the analytic
/// arctan tail of the Lorentzian outside the window added back.
/// Approaches 1 as γ → 0.
pub fn unit_weight_integral(
    profile: &CavityProfile,
    modes: &[QnmMode],
    mode: &QnmMode,
    window: &ResonanceWindow,
) -> Result<f64> {
    // reject windows that reach into a neighboring resonance
    for other in modes {
        if (other.omega - mode.omega).norm() < 1e-12 || other.omega.re <= 0.0 {
            continue;
        }
        if (other.omega.re - window.center).abs() < window.halfwidth {
            return Err(Error::WindowOverlap);
        }
    }
    let mass = mode_mass(profile, mode)?;
    let g = mode.gamma();
    let num = profile.n_out() * mode.surface_value.norm_sqr();
    // ω-integral of the Lorentzian over the window…
    let pi = std::f64::consts::PI;
    let lo = window.center - window.halfwidth;
    let hi = window.center + window.halfwidth;
    let panels = (((window.halfwidth / g).ceil() as usize) * 4).clamp(16, 4000);
    let omega_int: f64 = integrate_panels(lo, hi, panels, |w: f64| {
        let dw = w - mode.omega.re;
        1.0 / (dw * dw + g * g)
    });
    // …plus the analytic tail
    let tail = (pi - 2.0 * (window.halfwidth / g).atan()) / g;
    Ok(mass * num / (2.0 * pi) * (omega_int + tail))
}

/// ∫₀^{a⁺} ρ(x) |f_j(x)|² dx; tends to 1 for narrow resonances.
pub fn mode_mass(profile: &CavityProfile, mode: &QnmMode) -> Result<f64> {
    let mut acc = 0.0;
    let k = profile.rho_max().sqrt() * mode.omega.norm();
    for (x0, x1, rho) in profile.segment_spans() {
        let panels = panels_for(k, x1 - x0).max(8);
        acc += rho
            * integrate_panels(x0, x1, panels, |x: f64| {
                mode.evaluate(profile, x)
                    .map(|f| f.norm_sqr())
                    .unwrap_or(0.0)
            });
    }
    Ok(acc)
}

/// R_j = |f_j(a⁺)|² / (2|Im ω_j|); tends to 1 in the conservative limit
/// (for unit outside density).
pub fn surface_ratio(mode: &QnmMode) -> f64 {
    mode.surface_value.norm_sqr() / (2.0 * mode.gamma())
}

/// Relative residual of the cumulative rule
/// ∫₀^{ω_max} d(x,ω) dω ≈ ω_max/(π √ρ(x)): states are redistributed by
/// the cavity, not created.
pub fn second_sum_rule_check(profile: &CavityProfile, x: f64, omega_max: f64) -> Result<f64> {
    let hom = HomogeneousSolutions::new(profile)?;
    let pi = std::f64::consts::PI;
    // panels must resolve the narrowest resonance in the range
    let panels = ((omega_max / 0.01).ceil() as usize).clamp(200, 20_000);
    let integral: f64 = integrate_panels(1e-12, omega_max, panels, |w: f64| {
        let g = retarded_green_exact_with(&hom, x, x, Complex64::new(w, 0.0)).unwrap();
        -2.0 * w / pi * g.im
    });
    let rho = profile.rho_at_side(x, crate::profiles::Side::Inside)?;
    let weyl = omega_max / (pi * rho.sqrt());
    Ok((integral - weyl).abs() / weyl)
}
