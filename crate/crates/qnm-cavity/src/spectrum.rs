//! Quasinormal-mode spectra and the bilinear mode algebra.
//!
//! A QNM is a factorized solution f_j(x) e^{-iω_j t} of
//! ρ(x) ∂²φ/∂t² = ∂²φ/∂x² with f_j(0) = 0 and the outgoing condition
//! f_j'(a⁺) = i n0 ω_j f_j(a⁺). Frequencies sit in the lower half plane
//! (Im ω_j < 0) and, apart from overdamped modes on the imaginary axis,
//! come in pairs ω_{-j} = -ω_j*, f_{-j} = f_j*.
//!
//! The spectrum is computed as the zero set of the Wronskian
//! W(ω) = f g' - f' g of the left-matched and outgoing solutions, located
//! by recursive rectangle subdivision with argument-principle counting and
//! polished by Newton steps using the analytic dW/dω from transfer-matrix
//! differentiation.
//!
//! Orthogonality and normalization live in the conjugation-free bilinear
//! product ⟨φ,χ⟩ = i{∫(φχ̂ + φ̂χ)dx + n0 φ(a⁺)χ(a⁺)} on two-component
//! pairs (φ, φ̂ = ρ ∂φ/∂t); modes are normalized to ⟨f_j,f_j⟩ = 2ω_j.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::profiles::{CavityProfile, DielectricRod};
use crate::quadrature::Grid;

const I: Complex64 = Complex64::new(0.0, 1.0);

// ---------------------------------------------------------------------------
// transfer matrix
// ---------------------------------------------------------------------------

/// (value, derivative, ∂value/∂ω, ∂derivative/∂ω) of a solution at a point.
#[derive(Debug, Clone, Copy)]
struct State {
    v: Complex64,
    d: Complex64,
    pv: Complex64,
    pd: Complex64,
}

/// Advance a solution of u'' + ρω²u = 0 from x0 to x1 through constant ρ,
/// carrying the ω-derivatives along.
fn advance(s: State, rho: f64, w: Complex64, x0: f64, x1: f64) -> State {
    let sr = rho.sqrt();
    let k = sr * w;
    let dl = x1 - x0;
    let (c, sn) = {
        let kd = k * dl;
        (kd.cos(), kd.sin())
    };
    let v1 = s.v * c + s.d * sn / k;
    let d1 = -s.v * k * sn + s.d * c;
    // ∂/∂ω of cos(kδ), sin(kδ) brings down √ρ δ
    let pv1 =
        s.pv * c + s.pd * sn / k - s.v * sn * sr * dl + s.d * sr * (c * dl * k - sn) / (k * k);
    let pd1 = -s.pv * k * sn + s.pd * c - s.v * sr * (sn + k * c * dl) - s.d * sn * sr * dl;
    State {
        v: v1,
        d: d1,
        pv: pv1,
        pd: pd1,
    }
}

/// Left- and right-matched homogeneous solutions and their Wronskian.
///
/// f satisfies the nodal condition with f(0) = 0, f'(0) = 1; g matches the
/// outgoing wave e^{i n0 ω x} outside the cavity. W = f g' - f' g is
/// position independent, and its zeros are the QNM frequencies.
#[derive(Debug, Clone)]
pub struct HomogeneousSolutions {
    profile: CavityProfile,
    spans: Vec<(f64, f64, f64)>,
}

impl HomogeneousSolutions {
    pub fn new(profile: &CavityProfile) -> Result<Self> {
        profile.ensure_valid()?;
        Ok(HomogeneousSolutions {
            spans: profile.segment_spans(),
            profile: profile.clone(),
        })
    }

    pub fn profile(&self) -> &CavityProfile {
        &self.profile
    }

    fn f_state(&self, w: Complex64, x: f64) -> State {
        let mut s = State {
            v: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
            pv: Complex64::new(0.0, 0.0),
            pd: Complex64::new(0.0, 0.0),
        };
        for &(x0, x1, rho) in &self.spans {
            if x <= x1 {
                return advance(s, rho, w, x0, x.max(x0));
            }
            s = advance(s, rho, w, x0, x1);
        }
        advance(s, self.profile.rho_out, w, self.profile.a, x)
    }

    fn g_state(&self, w: Complex64, x: f64) -> State {
        let a = self.profile.a;
        let n0 = self.profile.n_out();
        let phase = (I * n0 * w * a).exp();
        if x >= a {
            let g = (I * n0 * w * x).exp();
            return State {
                v: g,
                d: I * n0 * w * g,
                pv: I * n0 * x * g,
                pd: I * n0 * g * (1.0 + I * n0 * w * x),
            };
        }
        let mut s = State {
            v: phase,
            d: I * n0 * w * phase,
            pv: I * n0 * a * phase,
            pd: I * n0 * phase * (1.0 + I * n0 * w * a),
        };
        for &(x0, x1, rho) in self.spans.iter().rev() {
            if x >= x0 {
                return advance(s, rho, w, x1, x.min(x1));
            }
            s = advance(s, rho, w, x1, x0);
        }
        unreachable!("x below 0 handled by caller")
    }

    /// f(x, ω) and f'(x, ω).
    pub fn f_at(&self, w: Complex64, x: f64) -> (Complex64, Complex64) {
        let s = self.f_state(w, x);
        (s.v, s.d)
    }

    /// g(x, ω) and g'(x, ω); g(x) = e^{i n0 ω x} for x ≥ a.
    pub fn g_at(&self, w: Complex64, x: f64) -> (Complex64, Complex64) {
        let s = self.g_state(w, x);
        (s.v, s.d)
    }

    /// W(ω) and dW/dω, evaluated at the cavity boundary.
    pub fn wronskian(&self, w: Complex64) -> (Complex64, Complex64) {
        let a = self.profile.a;
        let f = self.f_state(w, a);
        let g = self.g_state(w, a);
        let wr = f.v * g.d - f.d * g.v;
        let dwr = f.pv * g.d + f.v * g.pd - f.pd * g.v - f.d * g.pv;
        (wr, dwr)
    }

    /// W evaluated from f and g at an interior point; equal to
    /// [`wronskian`](Self::wronskian) up to rounding for any x.
    pub fn wronskian_at(&self, w: Complex64, x: f64) -> Complex64 {
        let f = self.f_state(w, x);
        let g = self.g_state(w, x);
        f.v * g.d - f.d * g.v
    }

    /// Magnitude scale of W, used to decide when W ≈ 0 is a pole.
    pub fn wronskian_scale(&self, w: Complex64) -> f64 {
        let a = self.profile.a;
        let f = self.f_state(w, a);
        let g = self.g_state(w, a);
        f.v.norm() * g.d.norm() + f.d.norm() * g.v.norm()
    }
}

// ---------------------------------------------------------------------------
// dielectric rod closed forms
// ---------------------------------------------------------------------------

/// Closed-form QNM frequency of the rod, paper indexing over all of ℤ:
/// n a ω_j = (j+½)π - i acoth(n/n0) for n > n0, and jπ - i atanh(n/n0)
/// for n < n0 (j = 0 is then overdamped, purely imaginary).
pub fn rod_qnm_frequency(rod: &DielectricRod, j: i32) -> Complex64 {
    let (n, n0, a) = (rod.n, rod.n0, rod.a);
    let na = n * a;
    if n > n0 {
        let alpha = (n0 / n).atanh(); // acoth(n/n0)
        Complex64::new((j as f64 + 0.5) * std::f64::consts::PI, -alpha) / na
    } else {
        let alpha = (n / n0).atanh();
        Complex64::new(j as f64 * std::f64::consts::PI, -alpha) / na
    }
}

/// Normalized closed-form rod modes for paper indices |j| ≤ jmax.
///
/// f_j(x) = sqrt(2/(n²a)) sin(n ω_j x) already satisfies ⟨f_j,f_j⟩ = 2ω_j
/// with the n0-weighted surface term; only the sign convention
/// (Re f'(0) > 0, ties broken by Im < 0) is applied on top.
pub fn rod_modes(rod: &DielectricRod, jmax: i32) -> Vec<QnmMode> {
    let mut out = Vec::new();
    for j in -jmax..=jmax {
        out.push(rod_mode(rod, j));
    }
    out.sort_by(|a, b| a.omega.re.partial_cmp(&b.omega.re).unwrap());
    out
}

/// One closed-form rod mode at paper index j.
pub fn rod_mode(rod: &DielectricRod, j: i32) -> QnmMode {
    let w = rod_qnm_frequency(rod, j);
    let c = Complex64::new((2.0 / (rod.n * rod.n * rod.a)).sqrt(), 0.0);
    let mut mode = QnmMode {
        index: j,
        omega: w,
        segment_coeffs: vec![(c, Complex64::new(0.0, 0.0))],
        surface_value: c * (rod.n * w * rod.a).sin(),
        norm_applied: true,
    };
    mode.fix_sign();
    mode
}

// ---------------------------------------------------------------------------
// modes
// ---------------------------------------------------------------------------

/// One normalized eigenpair. The wavefunction is stored exactly: on the
/// s-th density segment f(x) = A_s sin(√ρ_s ω x) + B_s cos(√ρ_s ω x) with
/// global x, so evaluation carries no interpolation error.
#[derive(Debug, Clone)]
pub struct QnmMode {
    /// Label: positive indices count Re ω > 0 modes by increasing real
    /// part, negative ones their conjugate partners, 0 an overdamped
    /// self-paired mode (closed-form rod constructors use the paper's ℤ
    /// indexing instead).
    pub index: i32,
    pub omega: Complex64,
    pub segment_coeffs: Vec<(Complex64, Complex64)>,
    /// f_j(a⁺): the inside boundary value, matched to the outgoing form.
    pub surface_value: Complex64,
    pub norm_applied: bool,
}

impl QnmMode {
    /// γ_j = |Im ω_j|, the resonance half-width.
    pub fn gamma(&self) -> f64 {
        -self.omega.im
    }

    /// f_j(x) for 0 ≤ x ≤ a.
    pub fn evaluate(&self, profile: &CavityProfile, x: f64) -> Result<Complex64> {
        let (f, _) = self.evaluate_with_derivative(profile, x)?;
        Ok(f)
    }

    /// (f_j(x), f_j'(x)).
    pub fn evaluate_with_derivative(
        &self,
        profile: &CavityProfile,
        x: f64,
    ) -> Result<(Complex64, Complex64)> {
        if x < 0.0 || x > profile.a {
            return Err(Error::OutsideCavity(x, profile.a));
        }
        let spans = profile.segment_spans();
        let mut idx = 0;
        for (i, (x0, _, _)) in spans.iter().enumerate() {
            if x >= *x0 {
                idx = i;
            }
        }
        let (a, b) = self.segment_coeffs[idx];
        let k = spans[idx].2.sqrt() * self.omega;
        let (s, c) = {
            let kx = k * x;
            (kx.sin(), kx.cos())
        };
        Ok((a * s + b * c, k * (a * c - b * s)))
    }

    /// The partner mode with ω ↦ -ω*, f ↦ f*.
    pub fn conjugate_partner(&self) -> QnmMode {
        QnmMode {
            index: -self.index,
            omega: -self.omega.conj(),
            segment_coeffs: self
                .segment_coeffs
                .iter()
                .map(|(a, b)| (-a.conj(), b.conj()))
                .collect(),
            surface_value: self.surface_value.conj(),
            norm_applied: self.norm_applied,
        }
    }

    /// ⟨f, f⟩ by exact per-segment antiderivatives (no conjugation):
    /// 2ω ∫ρ f² dx + i n0 f(a)².
    pub fn bilinear_norm(&self, profile: &CavityProfile) -> Complex64 {
        let mut integral = Complex64::new(0.0, 0.0);
        for (idx, (x0, x1, rho)) in profile.segment_spans().iter().enumerate() {
            let (a, b) = self.segment_coeffs[idx];
            let k = rho.sqrt() * self.omega;
            integral += rho * segment_square_integral(a, b, k, *x0, *x1);
        }
        2.0 * self.omega * integral + I * profile.n_out() * self.surface_value * self.surface_value
    }

    /// Flip the overall sign so Re f'(0) > 0 (Im f'(0) < 0 on ties).
    fn fix_sign(&mut self) {
        let (a0, _) = self.segment_coeffs[0];
        // f'(0) = A_0 k_0; the sign of Re(A_0 k_0) decides
        let k0 = self.omega; // √ρ factor is positive, irrelevant for sign
        let d0 = a0 * k0;
        let flip = if d0.re.abs() > 1e-12 * d0.norm() {
            d0.re < 0.0
        } else {
            d0.im > 0.0
        };
        if flip {
            for (a, b) in &mut self.segment_coeffs {
                *a = -*a;
                *b = -*b;
            }
            self.surface_value = -self.surface_value;
        }
    }
}

/// ∫_{x0}^{x1} (A sin kx + B cos kx)² dx, valid for complex k.
fn segment_square_integral(
    a: Complex64,
    b: Complex64,
    k: Complex64,
    x0: f64,
    x1: f64,
) -> Complex64 {
    let s2 = |x: f64| (2.0 * k * x).sin();
    let sq = |x: f64| {
        let s = (k * x).sin();
        s * s
    };
    (a * a + b * b) * 0.5 * (x1 - x0)
        + (b * b - a * a) * (s2(x1) - s2(x0)) / (4.0 * k)
        + a * b * (sq(x1) - sq(x0)) / k
}

// ---------------------------------------------------------------------------
// root search
// ---------------------------------------------------------------------------

/// Frequency window for the spectrum search. Negative real parts are
/// reached through the mirror symmetry ω ↦ -ω*; overdamped modes on the
/// imaginary axis are captured when `re_min ≤ 0`.
#[derive(Debug, Clone, Copy)]
pub struct SearchWindow {
    pub re_min: f64,
    pub re_max: f64,
    /// How deep below the real axis to look; `None` deepens automatically
    /// until the count stabilizes.
    pub im_min: Option<f64>,
    pub max_modes: usize,
}

impl SearchWindow {
    pub fn positive(re_max: f64, max_modes: usize) -> Self {
        SearchWindow {
            re_min: 0.0,
            re_max,
            im_min: None,
            max_modes,
        }
    }
}

/// Find all QNMs in the window, normalized and sorted by Re ω.
///
/// Zeros of W are localized by recursive rectangle subdivision: the
/// argument principle counts zeros in each box, boxes with one zero are
/// polished by Newton with the analytic dW/dω, and the final root list is
/// re-counted against the whole window.
pub fn find_qnms(profile: &CavityProfile, window: &SearchWindow) -> Result<Vec<QnmMode>> {
    let hom = HomogeneousSolutions::new(profile)?;
    let optical_len: f64 = profile
        .segment_spans()
        .iter()
        .map(|(x0, x1, r)| r.sqrt() * (x1 - x0))
        .sum();
    let spacing = std::f64::consts::PI / optical_len;

    let re_hi = window.re_max.max(-window.re_min);
    let re_lo = -0.45 * spacing; // keep Re = 0 roots strictly inside
    if re_hi <= 0.0 {
        return Ok(Vec::new());
    }

    // deepen until the count stops growing
    let mut depth = window
        .im_min
        .map(|d| -d)
        .unwrap_or(2.0 * spacing)
        .max(2.0 * spacing);
    let mut count = count_zeros(&hom, re_lo, re_hi, -depth, 0.0)?;
    if window.im_min.is_none() {
        for _ in 0..6 {
            let deeper = count_zeros(&hom, re_lo, re_hi, -2.0 * depth, 0.0)?;
            if deeper == count {
                break;
            }
            count = deeper;
            depth *= 2.0;
        }
        depth *= 2.0;
    }

    let mut roots = Vec::new();
    subdivide(&hom, re_lo, re_hi, -depth, 0.0, 0, &mut roots)?;
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    roots.dedup_by(|a, b| (*a - *b).norm() < 1e-8 * spacing);

    let recount = count_zeros(&hom, re_lo, re_hi, -depth, 0.0)?;
    if recount != roots.len() {
        return Err(Error::RootCountMismatch {
            contour: recount,
            found: roots.len(),
        });
    }

    // residual gate
    for &r in &roots {
        let (w, _) = hom.wronskian(r);
        if w.norm() > 1e-10 * hom.wronskian_scale(r) {
            return Err(Error::NoConvergence("Wronskian residual above tolerance"));
        }
    }

    let mut modes: Vec<QnmMode> = Vec::new();
    let mut next_index = 1;
    for r in roots {
        if r.re < -0.45 * spacing {
            continue;
        }
        let index = if r.re.abs() < 1e-9 * spacing.max(1.0) {
            0
        } else {
            next_index
        };
        let mode = build_mode(&hom, profile, r, index)?;
        if index != 0 {
            next_index += 1;
        }
        modes.push(mode);
    }

    // emit mirror partners when the caller's window dips below zero
    if window.re_min < 0.0 {
        let partners: Vec<QnmMode> = modes
            .iter()
            .filter(|m| m.omega.re > 0.0 && -m.omega.re >= window.re_min)
            .map(|m| m.conjugate_partner())
            .collect();
        modes.extend(partners);
    }
    let edge = 1e-9 * spacing;
    modes.retain(|m| m.omega.re >= window.re_min - edge && m.omega.re <= window.re_max + edge);
    modes.sort_by(|a, b| {
        (a.omega.re, a.omega.im)
            .partial_cmp(&(b.omega.re, b.omega.im))
            .unwrap()
    });
    modes.truncate(window.max_modes);
    Ok(modes)
}

fn build_mode(
    hom: &HomogeneousSolutions,
    profile: &CavityProfile,
    w: Complex64,
    index: i32,
) -> Result<QnmMode> {
    // convert the propagated (f, f') at each segment edge to global
    // sin/cos coefficients on that segment
    let mut coeffs = Vec::new();
    for (x0, _x1, rho) in profile.segment_spans() {
        let (v, d) = hom.f_at(w, x0);
        let k = rho.sqrt() * w;
        let (s, c) = {
            let kx = k * x0;
            (kx.sin(), kx.cos())
        };
        let a = v * s + d * c / k;
        let b = v * c - d * s / k;
        coeffs.push((a, b));
    }
    let (fa, _) = hom.f_at(w, profile.a);
    let mut mode = QnmMode {
        index,
        omega: w,
        segment_coeffs: coeffs,
        surface_value: fa,
        norm_applied: false,
    };
    let norm = mode.bilinear_norm(profile) / (2.0 * w);
    let scale = norm.sqrt().inv();
    for (a, b) in &mut mode.segment_coeffs {
        *a *= scale;
        *b *= scale;
    }
    mode.surface_value *= scale;
    mode.norm_applied = true;
    mode.fix_sign();
    Ok(mode)
}

/// Argument-principle zero count on the rectangle boundary, with adaptive
/// refinement of the phase sampling.
fn count_zeros(
    hom: &HomogeneousSolutions,
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
) -> Result<usize> {
    let corners = [
        Complex64::new(re0, im0),
        Complex64::new(re1, im0),
        Complex64::new(re1, im1),
        Complex64::new(re0, im1),
        Complex64::new(re0, im0),
    ];
    let mut n_per_side = 128usize;
    #[allow(clippy::mut_range_bound)]
    'retry: while n_per_side <= 1 << 16 {
        let mut total = 0.0;
        for seg in corners.windows(2) {
            let (c0, c1) = (seg[0], seg[1]);
            let mut prev = hom.wronskian(c0).0;
            for k in 1..=n_per_side {
                let t = k as f64 / n_per_side as f64;
                let z = c0 + (c1 - c0) * t;
                let cur = hom.wronskian(z).0;
                let step = (cur / prev).arg();
                if step.abs() > 1.8 {
                    n_per_side *= 4;
                    continue 'retry;
                }
                total += step;
                prev = cur;
            }
        }
        let winding = total / (2.0 * std::f64::consts::PI);
        let m = winding.round();
        if (winding - m).abs() > 0.25 {
            n_per_side *= 4;
            continue 'retry;
        }
        return Ok(m as usize);
    }
    Err(Error::NoConvergence(
        "contour phase sampling did not settle",
    ))
}

fn subdivide(
    hom: &HomogeneousSolutions,
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
    depth: usize,
    out: &mut Vec<Complex64>,
) -> Result<()> {
    let m = count_zeros(hom, re0, re1, im0, im1)?;
    if m == 0 {
        return Ok(());
    }
    if m == 1 {
        let start = Complex64::new(0.5 * (re0 + re1), 0.5 * (im0 + im1));
        if let Some(root) = newton(hom, start, re0, re1, im0, im1) {
            out.push(root);
            return Ok(());
        }
        // Newton escaped; fall through and split further
    }
    if depth > 60 {
        return Err(Error::NoConvergence("subdivision depth exhausted"));
    }
    // split the longer side, placing the cut away from any zero: the
    // Newton step |W/dW| at the edge samples approximates the distance
    // to the nearest zero
    if re1 - re0 > im1 - im0 {
        let mid = pick_cut(re0, re1, |m| {
            edge_clearance(hom, Complex64::new(m, im0), Complex64::new(m, im1))
        });
        subdivide(hom, re0, mid, im0, im1, depth + 1, out)?;
        subdivide(hom, mid, re1, im0, im1, depth + 1, out)
    } else {
        let mid = pick_cut(im0, im1, |m| {
            edge_clearance(hom, Complex64::new(re0, m), Complex64::new(re1, m))
        });
        subdivide(hom, re0, re1, im0, mid, depth + 1, out)?;
        subdivide(hom, re0, re1, mid, im1, depth + 1, out)
    }
}

/// Cut position near the middle of [lo, hi] maximizing the clearance to
/// the nearest Wronskian zero.
fn pick_cut(lo: f64, hi: f64, clearance: impl Fn(f64) -> f64) -> f64 {
    let span = hi - lo;
    let mut best = (f64::MIN, 0.5 * (lo + hi));
    for frac in [0.5, 0.531, 0.469, 0.573, 0.427] {
        let m = lo + frac * span;
        let c = clearance(m);
        if c > 0.04 * span {
            return m;
        }
        if c > best.0 {
            best = (c, m);
        }
    }
    best.1
}

fn edge_clearance(hom: &HomogeneousSolutions, z0: Complex64, z1: Complex64) -> f64 {
    (0..=32)
        .map(|k| {
            let z = z0 + (z1 - z0) * (k as f64 / 32.0);
            let (w, dw) = hom.wronskian(z);
            (w / dw).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn newton(
    hom: &HomogeneousSolutions,
    start: Complex64,
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
) -> Option<Complex64> {
    let mre = 0.2 * (re1 - re0);
    let mim = 0.2 * (im1 - im0);
    let mut w = start;
    for _ in 0..80 {
        let (wr, dwr) = hom.wronskian(w);
        let step = wr / dwr;
        let next = w - step;
        if next.re < re0 - mre || next.re > re1 + mre || next.im < im0 - mim || next.im > im1 + mim
        {
            return None;
        }
        w = next;
        if step.norm() < 1e-14 * w.norm().max(1.0) {
            return Some(w);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// two-component pairs and the bilinear product
// ---------------------------------------------------------------------------

/// Two-component state (φ, φ̂ = ρ ∂φ/∂t) sampled on a quadrature grid.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub grid: Arc<Grid>,
    pub phi: Vec<Complex64>,
    pub phi_hat: Vec<Complex64>,
}

impl FieldPair {
    pub fn from_functions(
        grid: Arc<Grid>,
        mut phi: impl FnMut(f64) -> Complex64,
        mut phi_hat: impl FnMut(f64) -> Complex64,
    ) -> Self {
        let p = grid.points.iter().map(|&x| phi(x)).collect();
        let h = grid.points.iter().map(|&x| phi_hat(x)).collect();
        FieldPair {
            grid,
            phi: p,
            phi_hat: h,
        }
    }

    /// The eigen-pair (f_j, -iρω_j f_j) of a mode.
    pub fn from_mode(mode: &QnmMode, profile: &CavityProfile, grid: Arc<Grid>) -> Result<Self> {
        let mut phi = Vec::with_capacity(grid.len());
        let mut phi_hat = Vec::with_capacity(grid.len());
        for &x in &grid.points {
            let f = mode.evaluate(profile, x)?;
            let rho = profile.rho_at_side(x, crate::profiles::Side::Inside)?;
            phi.push(f);
            phi_hat.push(-I * rho * mode.omega * f);
        }
        Ok(FieldPair { grid, phi, phi_hat })
    }

    fn same_grid(&self, other: &FieldPair) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn boundary_value(&self) -> Complex64 {
        *self.phi.last().unwrap()
    }
}

/// The bilinear scalar product
/// ⟨A,B⟩ = i{∫₀^{a⁺}(φ_A φ̂_B + φ̂_A φ_B)dx + n0 φ_A(a⁺)φ_B(a⁺)}.
/// No complex conjugation anywhere; the product is symmetric.
pub fn bilinear_product(
    a: &FieldPair,
    b: &FieldPair,
    profile: &CavityProfile,
) -> Result<Complex64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let mut integral = Complex64::new(0.0, 0.0);
    for i in 0..a.grid.len() {
        integral += (a.phi[i] * b.phi_hat[i] + a.phi_hat[i] * b.phi[i]) * a.grid.weights[i];
    }
    let surface = profile.n_out() * a.boundary_value() * b.boundary_value();
    Ok(I * (integral + surface))
}

/// Result of projecting a state onto a mode.
#[derive(Debug, Clone, Copy)]
pub struct Projected {
    pub coeff: Complex64,
    /// The grid resolves fewer than 10 points per mode wavelength;
    /// the coefficient is still returned.
    pub under_resolved: bool,
}

/// a_j = ⟨f_j, φ⟩ / 2ω_j. Well defined for any pair, outgoing or not.
pub fn project_coefficient(
    mode: &QnmMode,
    state: &FieldPair,
    profile: &CavityProfile,
) -> Result<Projected> {
    let mode_pair = FieldPair::from_mode(mode, profile, state.grid.clone())?;
    let prod = bilinear_product(&mode_pair, state, profile)?;
    let k_inside = profile.rho_max().sqrt() * mode.omega.norm();
    let mean_dx = state.grid.a / state.grid.len() as f64;
    let pts_per_wavelength = 2.0 * std::f64::consts::PI / (k_inside * mean_dx);
    Ok(Projected {
        coeff: prod / (2.0 * mode.omega),
        under_resolved: pts_per_wavelength < 10.0,
    })
}

/// max_{j≠k} |⟨f_j, f_k⟩| / |2ω_j| over the supplied modes.
pub fn check_orthogonality(modes: &[QnmMode], profile: &CavityProfile) -> Result<f64> {
    let k_max = modes.iter().map(|m| m.omega.norm()).fold(1.0, f64::max);
    let grid = Arc::new(Grid::for_profile(profile, k_max, 14.0));
    let pairs: Vec<FieldPair> = modes
        .iter()
        .map(|m| FieldPair::from_mode(m, profile, grid.clone()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (j, mj) in pairs.iter().enumerate() {
        for (k, mk) in pairs.iter().enumerate() {
            if j == k || (modes[j].omega - modes[k].omega).norm() < 1e-12 {
                continue;
            }
            let p = bilinear_product(mj, mk, profile)?;
            worst = worst.max(p.norm() / (2.0 * modes[j].omega).norm());
        }
    }
    Ok(worst)
}

/// |⟨f,f⟩_quadrature - 2ω| / |2ω| on the given grid.
pub fn normalization_residual(
    mode: &QnmMode,
    profile: &CavityProfile,
    grid: Arc<Grid>,
) -> Result<f64> {
    let pair = FieldPair::from_mode(mode, profile, grid)?;
    let p = bilinear_product(&pair, &pair, profile)?;
    let target = 2.0 * mode.omega;
    Ok((p - target).norm() / target.norm())
}
