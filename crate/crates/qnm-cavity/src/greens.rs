//! Retarded Green's functions: the exact Wronskian construction and the
//! QNM expansions, plus the structural identities connecting them.
//!
//! The exact form G̃(x,y,ω) = f(x_<) g(x_>) / W(ω) is entire in ω off the
//! spectrum and serves as the reference everywhere; the mode sums are
//! validated against it, never the other way round.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::profiles::CavityProfile;
use crate::series::{cesaro, sum_with_tail, SeriesConfig, SeriesResult};
use crate::spectrum::{HomogeneousSolutions, QnmMode};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Exact retarded Green's function f(min)·g(max)/W for 0 ≤ x,y ≤ a.
///
/// ω may be complex (the transfer matrix is entire); a vanishing Wronskian
/// means ω sits on a QNM pole and is reported as [`Error::NearPole`].
pub fn retarded_green_exact(
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega: Complex64,
) -> Result<Complex64> {
    let hom = HomogeneousSolutions::new(profile)?;
    retarded_green_exact_with(&hom, x, y, omega)
}

/// Same as [`retarded_green_exact`] but reusing the solution cache.
pub fn retarded_green_exact_with(
    hom: &HomogeneousSolutions,
    x: f64,
    y: f64,
    omega: Complex64,
) -> Result<Complex64> {
    let a = hom.profile().a;
    if x < 0.0 || y < 0.0 {
        return Err(Error::NegativePosition(x.min(y)));
    }
    if x > a || y > a {
        return Err(Error::OutsideCavity(x.max(y), a));
    }
    let (w, _) = hom.wronskian(omega);
    if w.norm() < 1e-12 * hom.wronskian_scale(omega) {
        return Err(Error::NearPole(omega));
    }
    let (f, _) = hom.f_at(omega, x.min(y));
    let (g, _) = hom.g_at(omega, x.max(y));
    Ok(f * g / w)
}

pub(crate) fn is_self_paired(m: &QnmMode) -> bool {
    m.omega.re.abs() < 1e-10 * m.omega.norm()
}

/// Sampled mode data at fixed positions, with partner evaluation by
/// conjugation ( f_{-j} = f_j* ).
pub(crate) struct ModeSample {
    pub omega: Complex64,
    pub fx: Complex64,
    pub fy: Complex64,
    pub fa: Complex64,
    pub self_paired: bool,
}

pub(crate) fn sample_modes(
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
) -> Result<Vec<ModeSample>> {
    modes
        .iter()
        .map(|m| {
            Ok(ModeSample {
                omega: m.omega,
                fx: m.evaluate(profile, x)?,
                fy: m.evaluate(profile, y)?,
                fa: m.surface_value,
                self_paired: is_self_paired(m),
            })
        })
        .collect()
}

impl ModeSample {
    /// Apply `term` to this mode and (when present) its partner, returning
    /// the combined contribution.
    pub fn paired<F>(&self, mut term: F) -> Complex64
    where
        F: FnMut(Complex64, Complex64, Complex64, Complex64) -> Complex64,
    {
        let t = term(self.omega, self.fx, self.fy, self.fa);
        if self.self_paired {
            t
        } else {
            t + term(
                -self.omega.conj(),
                self.fx.conj(),
                self.fy.conj(),
                self.fa.conj(),
            )
        }
    }
}

/// Time-domain QNM expansion Σ_j f_j(x) f_j(y) e^{-iω_j t} / (2iω_j) with
/// conjugate pairs combined, Cesàro averaged.
///
/// `modes` is the positive family (Re ω ≥ 0), typically from
/// [`find_qnms`](crate::spectrum::find_qnms) or
/// [`rod_modes`](crate::spectrum::rod_modes) filtered to Re ω ≥ 0.
pub fn retarded_green_qnm_time(
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
    t: f64,
    config: &SeriesConfig,
) -> Result<SeriesResult> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "retarded response needs t >= 0, got {t}"
        )));
    }
    let samples = sample_modes(&positive_family(modes, config.qnm_terms), profile, x, y)?;
    let terms = samples
        .iter()
        .map(|s| s.paired(|w, fx, fy, _| fx * fy / (2.0 * I * w) * (-I * w * t).exp()));
    let r = cesaro(terms.collect::<Vec<_>>().into_iter());
    if r.tail_estimate > config.tolerance {
        return Err(Error::TailTooLarge {
            tail: r.tail_estimate,
            tol: config.tolerance,
        });
    }
    Ok(r)
}

/// Frequency-domain QNM expansion Σ_j f_j(x) f_j(y) / [2ω_j (ω - ω_j)],
/// pairs combined, plain truncation.
pub fn retarded_green_qnm_freq(
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega: Complex64,
    config: &SeriesConfig,
) -> Result<SeriesResult> {
    let samples = sample_modes(&positive_family(modes, config.qnm_terms), profile, x, y)?;
    let terms = samples
        .iter()
        .map(|s| s.paired(|w, fx, fy, _| fx * fy / (2.0 * w * (omega - w))));
    Ok(sum_with_tail(terms.collect::<Vec<_>>().into_iter()))
}

pub(crate) fn positive_family(modes: &[QnmMode], cap: usize) -> Vec<QnmMode> {
    let mut fam: Vec<QnmMode> = modes
        .iter()
        .filter(|m| m.omega.re > -1e-12)
        .cloned()
        .collect();
    fam.sort_by(|a, b| a.omega.re.partial_cmp(&b.omega.re).unwrap());
    fam.truncate(cap);
    fam
}

/// Residual of the surface-dissipation identity
/// G̃(x,y,ω) - G̃(x,y,-ω) = (2 n0 ω / i) G̃(x,a⁺,ω) G̃(y,a⁺,-ω),
/// normalized by the size of its members. The n0 factor generalizes the
/// unit-outside-density statement to arbitrary rho_out.
pub fn verify_dissipation_identity(
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega: f64,
) -> Result<f64> {
    let hom = HomogeneousSolutions::new(profile)?;
    let a = profile.a;
    let wp = Complex64::new(omega, 0.0);
    let wm = -wp;
    let lhs =
        retarded_green_exact_with(&hom, x, y, wp)? - retarded_green_exact_with(&hom, x, y, wm)?;
    let rhs = 2.0 * profile.n_out() * wp / I
        * retarded_green_exact_with(&hom, x, a, wp)?
        * retarded_green_exact_with(&hom, y, a, wm)?;
    let scale = lhs.norm().max(rhs.norm()).max(1e-30);
    Ok((lhs - rhs).norm() / scale)
}

/// |LHS| of the identity: a direct measure of dissipation, vanishing in
/// the conservative limit.
pub fn dissipation_magnitude(profile: &CavityProfile, x: f64, y: f64, omega: f64) -> Result<f64> {
    let hom = HomogeneousSolutions::new(profile)?;
    let wp = Complex64::new(omega, 0.0);
    let lhs =
        retarded_green_exact_with(&hom, x, y, wp)? - retarded_green_exact_with(&hom, x, y, -wp)?;
    Ok(lhs.norm())
}

/// Residual of Σ_j f_j(x) f_j(y) / ω_j = 0 truncated at the first
/// `n_pairs` conjugate pairs, with the partial sums averaged over the
/// final quarter (plain Cesàro drags the early transient, which for
/// multi-segment profiles decays only like 1/N).
pub fn verify_qnm_sum_identity(
    modes: &[QnmMode],
    profile: &CavityProfile,
    x: f64,
    y: f64,
    n_pairs: usize,
) -> Result<SeriesResult> {
    let samples = sample_modes(&positive_family(modes, n_pairs), profile, x, y)?;
    let terms = samples.iter().map(|s| s.paired(|w, fx, fy, _| fx * fy / w));
    let mut r = crate::series::tail_average(terms.collect::<Vec<_>>().into_iter());
    r.tail_estimate = r.value.norm();
    Ok(r)
}

/// Kramers–Kronig check of upper-half-plane analyticity on a finite
/// window: |Re G̃(ω0) - (1/π) P∫_{-Ω}^{Ω} Im G̃(ω)/(ω-ω0) dω| relative to
/// |Re G̃(ω0)|. The window truncation dominates the residual.
pub fn kramers_kronig_residual(
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega0: f64,
    window: f64,
) -> Result<f64> {
    kramers_kronig_residual_resolved(profile, x, y, omega0, window, 40.0)
}

/// [`kramers_kronig_residual`] with an explicit quadrature density:
/// `panels_per_unit` must put a few panels on the narrowest resonance
/// width in the window.
pub fn kramers_kronig_residual_resolved(
    profile: &CavityProfile,
    x: f64,
    y: f64,
    omega0: f64,
    window: f64,
    panels_per_unit: f64,
) -> Result<f64> {
    let hom = HomogeneousSolutions::new(profile)?;
    let g0 = retarded_green_exact_with(&hom, x, y, Complex64::new(omega0, 0.0))?;
    let im_at = |w: f64| -> Result<f64> {
        Ok(retarded_green_exact_with(&hom, x, y, Complex64::new(w, 0.0))?.im)
    };
    // subtract the pole value so the integrand is regular, then add the
    // analytic remainder Im G(ω0) ln|(Ω-ω0)/(Ω+ω0)|
    let n_panels = (window * panels_per_unit) as usize;
    let gl = crate::quadrature::GaussLegendre::new(12);
    let mut pv = 0.0;
    let h = 2.0 * window / n_panels as f64;
    for p in 0..n_panels {
        let lo = -window + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
            let w = mid + 0.5 * h * t;
            let num = if w == 0.0 { 0.0 } else { im_at(w)? - g0.im };
            pv += wt * 0.5 * h * num / (w - omega0);
        }
    }
    pv += g0.im * ((window - omega0).abs() / (window + omega0).abs()).ln();
    let re_kk = pv / std::f64::consts::PI;
    Ok((re_kk - g0.re).abs() / g0.re.abs().max(1e-30))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{make_dielectric_rod, CavityProfile, DielectricRod, Segment};
    use crate::spectrum::rod_modes;

    fn rod() -> DielectricRod {
        DielectricRod::new(5.0, 1.0, 1.0).unwrap()
    }

    /// Oracle for the free half-line: G = -sin(ωx_<) e^{iωx_>}/ω. A
    /// vanishing step (rho_out = 1 + 1e-13) keeps the profile formally
    /// valid without affecting the value at this accuracy.
    #[test]
    fn free_halfline_green() {
        let w = Complex64::new(1.0, 0.0);
        let expect = -(0.25f64).sin() * Complex64::new(0.0, 0.5).exp();
        let p = CavityProfile {
            segments: vec![Segment { x0: 0.0, rho: 1.0 }],
            a: 1.0,
            rho_out: 1.0 + 1e-13,
        };
        let g = retarded_green_exact(&p, 0.25, 0.5, w).unwrap();
        assert!((g - expect).norm() < 1e-9, "{g} vs {expect}");
    }

    #[test]
    fn exact_green_matches_rod_closed_form() {
        let p = rod().profile();
        let (n, n0, a) = (5.0, 1.0, 1.0);
        for &(x, y, w) in &[(0.3, 0.7, 2.0), (0.5, 0.5, 1.0), (0.9, 0.2, 3.3)] {
            let g = retarded_green_exact(&p, x, y, Complex64::new(w, 0.0)).unwrap();
            let (xm, xm2) = (x.min(y), x.max(y));
            let num = n * (n * w * (a - xm2)).cos() - I * n0 * (n * w * (a - xm2)).sin();
            let den = n * (n * w * a).cos() - I * n0 * (n * w * a).sin();
            let closed = -(n * w * xm).sin() / (n * w) * num / den;
            assert!((g - closed).norm() < 1e-13 * closed.norm().max(1.0));
        }
    }

    #[test]
    fn reciprocity() {
        let p = CavityProfile {
            segments: vec![Segment { x0: 0.0, rho: 9.0 }, Segment { x0: 0.5, rho: 4.0 }],
            a: 1.0,
            rho_out: 1.0,
        };
        for &(x, y) in &[(0.2, 0.8), (0.6, 0.3)] {
            let w = Complex64::new(1.7, 0.0);
            let g1 = retarded_green_exact(&p, x, y, w).unwrap();
            let g2 = retarded_green_exact(&p, y, x, w).unwrap();
            assert_eq!(g1, g2);
        }
    }

    #[test]
    fn dos_positivity_along_real_axis() {
        let p = rod().profile();
        for k in 1..40 {
            let w = 0.1 * k as f64;
            let g = retarded_green_exact(&p, 0.5, 0.5, Complex64::new(w, 0.0)).unwrap();
            let d = -2.0 * w / std::f64::consts::PI * g.im;
            assert!(d >= -1e-14, "negative DOS {d} at omega = {w}");
        }
    }

    #[test]
    fn near_pole_detected() {
        let p = rod().profile();
        let w = crate::spectrum::rod_qnm_frequency(&rod(), 1);
        assert!(matches!(
            retarded_green_exact(&p, 0.3, 0.6, w),
            Err(Error::NearPole(_))
        ));
    }

    #[test]
    fn dissipation_identity_on_grid() {
        let p = rod().profile();
        for &x in &[0.3, 0.5] {
            for &y in &[0.45, 0.7] {
                for &w in &[0.7, 2.0, 3.1] {
                    let r = verify_dissipation_identity(&p, x, y, w).unwrap();
                    assert!(r < 1e-10, "residual {r} at ({x},{y},{w})");
                }
            }
        }
        // generalized outside density
        let p2 = make_dielectric_rod(2.0, 3.0, 1.0).unwrap();
        let r = verify_dissipation_identity(&p2, 0.3, 0.7, 2.0).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn dissipation_identity_small_omega() {
        let p = rod().profile();
        // both sides are odd in ω and vanish together
        let r = verify_dissipation_identity(&p, 0.4, 0.6, 1e-7);
        assert!(r.unwrap() < 1e-10);
        let l = dissipation_magnitude(&p, 0.4, 0.6, 1e-7).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn dissipation_shrinks_in_conservative_limit() {
        // |G(ω)-G(-ω)| ∝ 1/n0 for large n0, sampled midway between
        // resonances where the limit is uniform
        let mag = |n0: f64| -> f64 {
            let p = make_dielectric_rod(5.0, n0, 1.0).unwrap();
            let pi = std::f64::consts::PI;
            [1.5 * pi / 5.0, 2.5 * pi / 5.0, 3.5 * pi / 5.0]
                .iter()
                .map(|&w| dissipation_magnitude(&p, 0.3, 0.7, w).unwrap())
                .sum::<f64>()
        };
        let (m1, m2, m3) = (mag(10.0), mag(100.0), mag(1000.0));
        assert!(m2 < m1 / 9.9, "{m1} -> {m2}");
        assert!(m3 < m2 / 9.9, "{m2} -> {m3}");
    }

    #[test]
    fn qnm_freq_sum_converges_to_exact() {
        let rod = rod();
        let p = rod.profile();
        let w = Complex64::new(1.15, 0.0);
        let exact = retarded_green_exact(&p, 0.35, 0.65, w).unwrap();
        let mut errs = Vec::new();
        for &n in &[25, 100, 400] {
            let modes = rod_modes(&rod, n);
            let cfg = SeriesConfig {
                qnm_terms: n as usize + 1,
                ..SeriesConfig::default()
            };
            let got = retarded_green_qnm_freq(&modes, &p, 0.35, 0.65, w, &cfg).unwrap();
            let err = (got.value - exact).norm() / exact.norm();
            if let Some(&last) = errs.last() {
                assert!(err < last, "error did not shrink: {err} vs {last}");
            }
            errs.push(err);
        }
        assert!(errs[2] < 1e-4, "final error {}", errs[2]);
        let order = (errs[0] / errs[2]).ln() / (400.0f64 / 25.0).ln();
        println!("qnm freq sum empirical order: {order:.2} (errors {errs:?})");
        assert!(order > 1.0);
    }

    /// Image-expansion oracle: unfolding reflections at the node (factor
    /// -1) and at the step (factor r = (n-n0)/(n+n0)) gives the exact
    /// time-domain G as a finite staircase,
    /// G = (1/2n) Σ_m (-r)^m [θ(t-n(x+y+2am)) - θ(t-n(y-x+2am))
    ///     + r θ(t-n(2a-y+x+2am)) - r θ(t-n(2a-x-y+2am))]  for x ≤ y.
    fn staircase_green(n: f64, n0: f64, a: f64, x: f64, y: f64, t: f64) -> f64 {
        let (x, y) = (x.min(y), x.max(y));
        let r = (n - n0) / (n + n0);
        let step = |arrival: f64| if t >= n * arrival { 1.0 } else { 0.0 };
        let mut sum = 0.0;
        let mut coef = 1.0;
        for m in 0..200 {
            let shift = 2.0 * a * m as f64;
            sum += coef
                * (step(x + y + shift) - step(y - x + shift) + r * step(2.0 * a - y + x + shift)
                    - r * step(2.0 * a - x - y + shift));
            coef *= -r;
            if coef.abs() < 1e-18 {
                break;
            }
        }
        sum / (2.0 * n)
    }

    #[test]
    fn qnm_time_sum_matches_staircase() {
        let rod = rod();
        let p = rod.profile();
        let oracle = staircase_green(5.0, 1.0, 1.0, 0.5, 0.5, 1.0);
        assert_eq!(oracle, -0.1); // first arrival only
        let modes = rod_modes(&rod, 1500);
        let cfg = SeriesConfig {
            qnm_terms: 1501,
            tolerance: 1e-3,
            ..SeriesConfig::default()
        };
        let got = retarded_green_qnm_time(&modes, &p, 0.5, 0.5, 1.0, &cfg).unwrap();
        assert!(got.value.im.abs() < 1e-12);
        assert!(
            (got.value.re - oracle).abs() < 1e-4,
            "{} vs {}",
            got.value.re,
            oracle
        );
        // an off-diagonal point with several arrivals in the past
        let oracle2 = staircase_green(5.0, 1.0, 1.0, 0.2, 0.8, 7.3);
        let got2 = retarded_green_qnm_time(&modes, &p, 0.2, 0.8, 7.3, &cfg).unwrap();
        assert!(
            (got2.value.re - oracle2).abs() < 1e-4,
            "{} vs {}",
            got2.value.re,
            oracle2
        );
    }

    #[test]
    fn time_sum_vanishes_at_t_zero() {
        let rod = rod();
        let p = rod.profile();
        let modes = rod_modes(&rod, 800);
        let cfg = SeriesConfig {
            qnm_terms: 801,
            tolerance: 1e-2,
            ..SeriesConfig::default()
        };
        for &(x, y) in &[(0.5, 0.5), (0.3, 0.7)] {
            let got = retarded_green_qnm_time(&modes, &p, x, y, 0.0, &cfg).unwrap();
            assert!(got.value.norm() < 1e-3, "nonzero at t=0: {}", got.value);
        }
    }

    #[test]
    fn sum_identity_residuals() {
        let rod = rod();
        let p = rod.profile();
        let modes = rod_modes(&rod, 450);
        let r200 = verify_qnm_sum_identity(&modes, &p, 0.5, 0.5, 200).unwrap();
        assert!(r200.value.norm() < 1e-3, "{}", r200.value.norm());
        // term-by-term zero at the node
        let r0 = verify_qnm_sum_identity(&modes, &p, 0.0, 0.5, 50).unwrap();
        assert!(r0.value.norm() < 1e-15);
        // averaged partial sums settle monotonically
        let r100 = verify_qnm_sum_identity(&modes, &p, 0.5, 0.5, 100).unwrap();
        let r400 = verify_qnm_sum_identity(&modes, &p, 0.5, 0.5, 400).unwrap();
        assert!(r400.value.norm() < r100.value.norm());
    }

    #[test]
    fn kramers_kronig_on_window() {
        let p = rod().profile();
        let r = kramers_kronig_residual(&p, 0.4, 0.6, 1.0, 60.0).unwrap();
        assert!(r < 0.05, "KK residual {r}");
    }
}
