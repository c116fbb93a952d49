//! Composite Gauss–Legendre quadrature with panels that respect the
//! density discontinuities: a panel never straddles a segment edge, so
//! every integrand is analytic on every panel.

use crate::profiles::CavityProfile;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes/weights by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        assert!(order >= 2);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                // evaluate P_n(x) and P_n'(x) by recurrence
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 2..=n {
                    let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = pk;
                }
                pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / pp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// ∫_{x0}^{x1} f dx on a single panel.
    pub fn integrate<T, F>(&self, x0: f64, x1: f64, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(f64) -> T,
    {
        let mid = 0.5 * (x0 + x1);
        let hl = 0.5 * (x1 - x0);
        let mut acc = T::default();
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + hl * t) * (w * hl);
        }
        acc
    }
}

/// Quadrature nodes and weights over [0, a], segment-aware.
///
/// Nodes are open (never on a segment edge). The endpoints 0 and a are
/// appended with zero weight so sampled fields always carry their boundary
/// values, which the surface term of the bilinear product needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub a: f64,
}

impl Grid {
    /// Build a grid resolving oscillations up to wavenumber `k_max`
    /// (inside wavenumber sqrt(ρ)·ω) with at least `pts_per_wavelength`
    /// quadrature points per local wavelength.
    pub fn for_profile(profile: &CavityProfile, k_max: f64, pts_per_wavelength: f64) -> Self {
        let order = 12usize;
        let gl = GaussLegendre::new(order);
        let mut points = vec![0.0];
        let mut weights = vec![0.0];
        for (x0, x1, rho) in profile.segment_spans() {
            let k_local = rho.sqrt() * k_max.max(1.0);
            let wavelengths = k_local * (x1 - x0) / (2.0 * std::f64::consts::PI);
            let need = (wavelengths * pts_per_wavelength / order as f64).ceil() as usize;
            let panels = need.max(4);
            let h = (x1 - x0) / panels as f64;
            for p in 0..panels {
                let p0 = x0 + p as f64 * h;
                let mid = p0 + 0.5 * h;
                for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                    points.push(mid + 0.5 * h * t);
                    weights.push(0.5 * h * w);
                }
            }
        }
        points.push(profile.a);
        weights.push(0.0);
        Grid {
            points,
            weights,
            a: profile.a,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted sum Σ w_i f(x_i) for already-sampled values.
    pub fn sum_weighted<T>(&self, values: &[T]) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default + Copy,
    {
        let mut acc = T::default();
        for (v, w) in values.iter().zip(&self.weights) {
            acc = acc + *v * *w;
        }
        acc
    }
}

/// ∫ f dx over [x0, x1] with `panels` equal panels of order-12 GL.
pub fn integrate_panels<T, F>(x0: f64, x1: f64, panels: usize, mut f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    F: FnMut(f64) -> T,
{
    let gl = GaussLegendre::new(12);
    let mut acc = T::default();
    let h = (x1 - x0) / panels as f64;
    for p in 0..panels {
        let p0 = x0 + p as f64 * h;
        acc = acc + gl.integrate(p0, p0 + h, &mut f);
    }
    acc
}

/// Panel count resolving wavenumber k over a span of length `len`.
pub fn panels_for(k: f64, len: f64) -> usize {
    let wavelengths = k.abs() * len / (2.0 * std::f64::consts::PI);
    ((wavelengths * 2.0).ceil() as usize).max(4)
}
