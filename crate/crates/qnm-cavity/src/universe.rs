//! Modes-of-the-universe oracle at finite box size Λ.
//!
//! Enclosing the rod in a conservative box [0, Λ] with a node at Λ turns
//! the leaky cavity into an ordinary Sturm–Liouville problem with real
//! frequencies ν_l spaced by ≈ π/(n0 Λ). Standard box quantization on
//! those modes reproduces every cavity quantity as Λ → ∞, which makes the
//! finite-Λ computation a brute-force cross-check of the mode sums: no
//! complex frequencies, no bilinear products, just sines.
//!
//! The matching condition is solved exactly rather than to leading order
//! in a/Λ, so the only discretization left is the spacing itself.

use crate::error::{Error, Result};
use crate::profiles::DielectricRod;
use crate::thermal::ThermalState;

/// Box size and mode budget for the oracle.
#[derive(Debug, Clone, Copy)]
pub struct UniverseConfig {
    pub lambda: f64,
    /// Upper bound on the number of modes solved in one call.
    pub max_modes: usize,
}

impl UniverseConfig {
    pub fn new(lambda: f64, max_modes: usize) -> Self {
        UniverseConfig { lambda, max_modes }
    }

    fn check(&self, rod: &DielectricRod) -> Result<()> {
        if self.lambda < 50.0 * rod.a {
            return Err(Error::InvalidInput(format!(
                "box size {} too small: need at least 50 a = {}",
                self.lambda,
                50.0 * rod.a
            )));
        }
        Ok(())
    }
}

/// One box mode: real frequency plus the exactly matched amplitudes.
/// ψ(x) = A sin(n ν x) inside, C sin(n0 ν (Λ-x)) up to sign outside, with
/// the outside amplitude C = sqrt(2/(n0²Λ)) of standard box
/// normalization.
#[derive(Debug, Clone, Copy)]
pub struct UniverseMode {
    pub nu: f64,
    /// Interior amplitude under box normalization (A > 0 convention).
    pub amplitude_in: f64,
    /// |C/A|² from the exact matching at the cavity boundary.
    pub c2_over_a2: f64,
}

/// Eigenvalue condition of the boxed rod:
/// n cos(nνa) sin(n0ν(Λ-a)) + n0 sin(nνa) cos(n0ν(Λ-a)) = 0.
fn eigencondition(rod: &DielectricRod, lambda: f64, nu: f64) -> f64 {
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    n * (n * nu * a).cos() * (n0 * nu * (lambda - a)).sin()
        + n0 * (n * nu * a).sin() * (n0 * nu * (lambda - a)).cos()
}

fn mode_from_nu(rod: &DielectricRod, config: &UniverseConfig, nu: f64) -> UniverseMode {
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    let s = (n * nu * a).sin();
    let c = (n * nu * a).cos();
    let c2_over_a2 = s * s + (n / n0) * (n / n0) * c * c;
    let c_amp = (2.0 / (n0 * n0 * config.lambda)).sqrt();
    UniverseMode {
        nu,
        amplitude_in: c_amp / c2_over_a2.sqrt(),
        c2_over_a2,
    }
}

/// All box modes with ν in (nu_min, nu_max), by bisection between sign
/// changes on a grid finer than the smallest spacing.
pub fn universe_modes_in(
    rod: &DielectricRod,
    config: &UniverseConfig,
    nu_min: f64,
    nu_max: f64,
) -> Result<Vec<UniverseMode>> {
    config.check(rod)?;
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    let lambda = config.lambda;
    let dmin = std::f64::consts::PI / (n0 * (lambda - a) + n * a) * 0.45;
    let mut out = Vec::new();
    let mut u = nu_min.max(dmin * 0.1);
    let mut hu = eigencondition(rod, lambda, u);
    while u < nu_max {
        let v = (u + dmin).min(nu_max);
        let hv = eigencondition(rod, lambda, v);
        if hu == 0.0 {
            out.push(mode_from_nu(rod, config, u));
        } else if hu * hv < 0.0 {
            let mut lo = u;
            let mut hi = v;
            let mut flo = hu;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = eigencondition(rod, lambda, mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo < 1e-15 * hi.max(1.0) {
                    break;
                }
            }
            out.push(mode_from_nu(rod, config, 0.5 * (lo + hi)));
            if out.len() > config.max_modes {
                return Err(Error::InvalidInput("universe mode budget exhausted".into()));
            }
        }
        if v >= nu_max {
            break;
        }
        u = v;
        hu = hv;
    }
    // the spectrum must be nondegenerate for the factorization argument
    for w in out.windows(2) {
        if w[1].nu - w[0].nu < 1e-12 {
            return Err(Error::BracketingFailed("degenerate box frequencies"));
        }
    }
    Ok(out)
}

/// Box modes from 0 up to nu_max.
pub fn universe_modes(
    rod: &DielectricRod,
    config: &UniverseConfig,
    nu_max: f64,
) -> Result<Vec<UniverseMode>> {
    universe_modes_in(rod, config, 0.0, nu_max)
}

/// Interior amplitude A²(ν) interpolated at arbitrary ν through the four
/// surrounding box modes (Lagrange cubic).
fn amplitude_sq_at(rod: &DielectricRod, config: &UniverseConfig, nu: f64) -> Result<f64> {
    // interpolation is meaningless when the box spacing cannot resolve
    // the cavity resonance width
    let gamma = crate::spectrum::rod_qnm_frequency(rod, if rod.n > rod.n0 { 0 } else { 1 })
        .im
        .abs();
    let spacing = std::f64::consts::PI / (rod.n0 * config.lambda);
    if spacing > 2.5 * gamma {
        return Err(Error::InvalidInput(format!(
            "box spacing {spacing:.3e} cannot resolve the resonance width {gamma:.3e}; increase Lambda"
        )));
    }
    let pad = 6.0 * std::f64::consts::PI / (rod.n0 * config.lambda);
    let modes = universe_modes_in(rod, config, (nu - pad).max(0.0), nu + pad)?;
    if modes.len() < 4 {
        return Err(Error::BracketingFailed(
            "not enough box modes around the target",
        ));
    }
    let i = modes
        .partition_point(|m| m.nu < nu)
        .clamp(2, modes.len() - 2);
    let stencil = &modes[i - 2..i + 2];
    let mut acc = 0.0;
    for p in 0..4 {
        let mut lp = 1.0;
        for q in 0..4 {
            if q != p {
                lp *= (nu - stencil[q].nu) / (stencil[p].nu - stencil[q].nu);
            }
        }
        acc += stencil[p].amplitude_in * stencil[p].amplitude_in * lp;
    }
    Ok(acc)
}

/// Box-mode estimate of the correlator,
/// F̃ = n0 Λ ψ(x,|ω|) ψ(y,|ω|) / [ω (1-e^{-βω})], with ψ interpolated
/// between the discrete frequencies. Converges to the closed rod form as
/// Λ → ∞.
pub fn mu_correlator(
    rod: &DielectricRod,
    config: &UniverseConfig,
    x: f64,
    y: f64,
    omega: f64,
    thermal: &ThermalState,
) -> Result<f64> {
    let bose = thermal.bose(omega)?;
    let a2 = amplitude_sq_at(rod, config, omega.abs())?;
    let psi_x = (rod.n * omega.abs() * x).sin();
    let psi_y = (rod.n * omega.abs() * y).sin();
    Ok(rod.n0 * config.lambda * a2 * psi_x * psi_y / omega * bose)
}

/// Box-mode local density of states d(x,ω) = (n0Λ/π) ψ(x,ω)².
pub fn mu_dos(rod: &DielectricRod, config: &UniverseConfig, x: f64, omega: f64) -> Result<f64> {
    let a2 = amplitude_sq_at(rod, config, omega.abs())?;
    let psi_x = (rod.n * omega.abs() * x).sin();
    Ok(rod.n0 * config.lambda / std::f64::consts::PI * a2 * psi_x * psi_x)
}

/// Unit weight from the box modes: the summed cavity fraction of all box
/// modes within half a resonance spacing of Re ω_j, plus the analytic
/// Lorentzian tail outside the window. Exact normalization ∫ρψ² = 1 per
/// mode; the box spacing must resolve γ_j.
pub fn mu_unit_weight(rod: &DielectricRod, config: &UniverseConfig, j: i32) -> Result<f64> {
    let wj = crate::spectrum::rod_qnm_frequency(rod, j);
    let gamma = -wj.im;
    // box frequencies cluster across the resonance (the scattering phase
    // adds π there), so modest undersampling is still accurate; beyond
    // ~2.5γ per spacing the clustering cannot compensate
    let spacing = std::f64::consts::PI / (rod.n0 * config.lambda);
    if spacing > 2.5 * gamma {
        return Err(Error::InvalidInput(format!(
            "box spacing {spacing:.3e} cannot resolve the resonance width {gamma:.3e}"
        )));
    }
    let half = std::f64::consts::PI / (2.0 * rod.n * rod.a);
    let modes = universe_modes_in(rod, config, (wj.re - half).max(1e-9), wj.re + half)?;
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    let lambda = config.lambda;
    let mut acc = 0.0;
    for m in &modes {
        // exact interior/total norm split
        let i_in = n * n * (a / 2.0 - (2.0 * n * m.nu * a).sin() / (4.0 * n * m.nu));
        let i_out = m.c2_over_a2
            * n0
            * n0
            * ((lambda - a) / 2.0 - (2.0 * n0 * m.nu * (lambda - a)).sin() / (4.0 * n0 * m.nu));
        acc += i_in / (i_in + i_out);
    }
    let tail = 1.0 - 2.0 / std::f64::consts::PI * (half / gamma).atan();
    Ok(acc + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::correlator_closed_rod;

    fn rod() -> DielectricRod {
        DielectricRod::new(5.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn free_case_spacing_is_exact() {
        let free = DielectricRod::new(1.0, 1.0 + 1e-13, 1.0).unwrap();
        let cfg = UniverseConfig::new(100.0, 1000);
        let modes = universe_modes(&free, &cfg, 1.0).unwrap();
        for (l, m) in modes.iter().enumerate() {
            let expect = (l as f64 + 1.0) * std::f64::consts::PI / 100.0;
            assert!(
                (m.nu - expect).abs() < 1e-10,
                "nu_{l} = {} vs {expect}",
                m.nu
            );
        }
    }

    #[test]
    fn spacing_and_weyl_count() {
        let r = rod();
        let cfg = UniverseConfig::new(100.0, 1000);
        let modes = universe_modes(&r, &cfg, 3.0).unwrap();
        // mean spacing ≈ π/Λ; individual gaps dip near resonances where
        // the box frequencies cluster
        let mean = (modes.last().unwrap().nu - modes[0].nu) / (modes.len() as f64 - 1.0);
        let rel = (mean - std::f64::consts::PI / 100.0).abs() / (std::f64::consts::PI / 100.0);
        assert!(rel < 0.05, "mean spacing {mean}");
        // optical-length mode count: (n0(Λ-a) + n a) ω_max / π within ±2
        let expect = (1.0 * 99.0 + 5.0 * 1.0) * 3.0 / std::f64::consts::PI;
        assert!(
            (modes.len() as f64 - expect).abs() <= 2.0,
            "count {} vs {expect}",
            modes.len()
        );
        // nondegenerate by construction
        for w in modes.windows(2) {
            assert!(w[1].nu > w[0].nu);
        }
    }

    #[test]
    fn correlator_matches_closed_form() {
        let r = rod();
        let t0 = ThermalState::zero_temperature();
        let cfg = UniverseConfig::new(200.0, 2000);
        let v = mu_correlator(&r, &cfg, 0.5, 0.5, 1.0, &t0).unwrap();
        let closed = correlator_closed_rod(&r, 0.5, 0.5, 1.0, &t0).unwrap();
        assert!((v - closed).abs() < 0.01 * closed.abs(), "{v} vs {closed}");
        // factorization in x,y is exact by construction
        let f = |x: f64, y: f64| mu_correlator(&r, &cfg, x, y, 1.0, &t0).unwrap();
        let lhs = f(0.3, 0.6) * f(0.5, 0.8);
        let rhs = f(0.3, 0.8) * f(0.5, 0.6);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn discretization_error_shrinks_with_lambda() {
        let r = rod();
        let t0 = ThermalState::zero_temperature();
        let err = |lambda: f64| -> f64 {
            let cfg = UniverseConfig::new(lambda, 4000);
            let mut worst: f64 = 0.0;
            for &(x, y, w) in &[(0.5, 0.5, 1.0), (0.3, 0.3, 0.6), (0.5, 0.8, 1.3)] {
                let v = mu_correlator(&r, &cfg, x, y, w, &t0).unwrap();
                let c = correlator_closed_rod(&r, x, y, w, &t0).unwrap();
                worst = worst.max((v - c).abs() / c.abs());
            }
            worst
        };
        let (e200, e400) = (err(200.0), err(400.0));
        assert!(e400 < 0.6 * e200, "{e200} -> {e400}");
    }

    #[test]
    fn dos_matches_exact_near_resonance() {
        let r = rod();
        let p = r.profile();
        let cfg = UniverseConfig::new(200.0, 2000);
        let w0 = crate::spectrum::rod_qnm_frequency(&r, 0).re;
        let scfg = crate::series::SeriesConfig::default();
        for &w in &[w0 * 0.9, w0, w0 * 1.1] {
            let v = mu_dos(&r, &cfg, 0.5, w).unwrap();
            let ex = crate::dos::local_dos(crate::dos::DosSource::Exact, &[], &p, 0.5, w, &scfg)
                .unwrap();
            assert!((v - ex).abs() < 0.02 * ex.abs(), "omega {w}: {v} vs {ex}");
        }
    }

    #[test]
    fn free_dos_is_exact() {
        let free = DielectricRod::new(1.0, 1.0 + 1e-13, 1.0).unwrap();
        let cfg = UniverseConfig::new(200.0, 4000);
        for &w in &[0.5, 1.0, 2.0] {
            let v = mu_dos(&free, &cfg, 0.5, w).unwrap();
            let exact = 2.0 / std::f64::consts::PI * (w * 0.5f64).sin().powi(2);
            assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        }
    }

    #[test]
    fn unit_weight_from_box_modes() {
        let r50 = DielectricRod::new(50.0, 1.0, 1.0).unwrap();
        let cfg = UniverseConfig::new(4000.0, 100_000);
        let w = mu_unit_weight(&r50, &cfg, 0).unwrap();
        assert!((w - 1.0).abs() < 0.03, "unit weight {w}");
        // spacing vs width guard
        let too_small = UniverseConfig::new(800.0, 100_000);
        assert!(mu_unit_weight(&r50, &too_small, 0).is_err());
    }
}
