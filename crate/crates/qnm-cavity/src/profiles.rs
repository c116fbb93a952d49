//! Cavity density profiles.
//!
//! The wave equation ρ(x) ∂²φ/∂t² = ∂²φ/∂x² is studied on [0, a] with a
//! node at x = 0 and outgoing waves for x > a. The profile ρ(x) is
//! piecewise constant inside the cavity and takes the constant value
//! `rho_out = n0²` outside. A step discontinuity at x = a demarcates the
//! cavity; without it (and with any tail beyond a) the outside cannot be
//! eliminated from the dynamics and the mode expansion fails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One constant-density stretch of the cavity interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Left edge of the segment.
    pub x0: f64,
    /// Density ρ on the segment (n² for a dielectric of index n).
    pub rho: f64,
}

/// Piecewise-constant cavity density on [0, a] plus the outside value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityProfile {
    /// Interior segments, ordered by `x0`; the first starts at 0 and the
    /// last extends to `a`.
    pub segments: Vec<Segment>,
    /// Cavity length.
    pub a: f64,
    /// Density for x > a (n0²).
    pub rho_out: f64,
}

/// Which side of a discontinuity to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
}

/// A profile invariant that failed to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// Some density is zero or negative.
    NonPositiveDensity,
    /// The last interior density equals the outside density, so there is
    /// no step at x = a.
    NoStepAtBoundary,
    /// Segment edges are not strictly increasing from 0.
    BadSegmentEdges,
    /// The cavity length is not positive.
    NonPositiveLength,
    /// No segments at all.
    Empty,
}

/// The exactly solvable single-step profile: ρ = n² inside, n0² outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricRod {
    pub n: f64,
    pub n0: f64,
    pub a: f64,
}

impl DielectricRod {
    pub fn new(n: f64, n0: f64, a: f64) -> Result<Self> {
        if n.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || n0.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || a.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::InvalidInput(format!(
                "rod parameters must be positive, got n={n}, n0={n0}, a={a}"
            )));
        }
        if n == n0 {
            return Err(Error::InfiniteDissipation);
        }
        Ok(DielectricRod { n, n0, a })
    }

    pub fn profile(&self) -> CavityProfile {
        CavityProfile {
            segments: vec![Segment {
                x0: 0.0,
                rho: self.n * self.n,
            }],
            a: self.a,
            rho_out: self.n0 * self.n0,
        }
    }
}

/// Build the rod profile directly from (n, n0, a).
pub fn make_dielectric_rod(n: f64, n0: f64, a: f64) -> Result<CavityProfile> {
    DielectricRod::new(n, n0, a).map(|r| r.profile())
}

impl CavityProfile {
    /// Outside refractive index n0 = sqrt(rho_out). This also sets the
    /// coefficient of the surface term in the bilinear product.
    pub fn n_out(&self) -> f64 {
        self.rho_out.sqrt()
    }

    /// ρ(x). At interior edges the right-limit value is returned; at x = a
    /// the outside value, unless `Side::Inside` is requested via [`rho_at_side`].
    ///
    /// [`rho_at_side`]: CavityProfile::rho_at_side
    pub fn rho_at(&self, x: f64) -> Result<f64> {
        self.rho_at_side(x, Side::Outside)
    }

    /// ρ(x) with an explicit convention at x = a, where the step makes the
    /// two one-sided limits differ.
    pub fn rho_at_side(&self, x: f64, side: Side) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::NegativePosition(x));
        }
        if x > self.a || (x == self.a && side == Side::Outside) {
            return Ok(self.rho_out);
        }
        Ok(self.segment_at(x).rho)
    }

    /// The segment containing x (inside value at segment edges and at a).
    pub fn segment_at(&self, x: f64) -> &Segment {
        let mut idx = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if x >= s.x0 {
                idx = i;
            } else {
                break;
            }
        }
        &self.segments[idx]
    }

    /// Segment boundaries as (x0, x1, rho) triples covering [0, a].
    pub fn segment_spans(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            let x1 = self.segments.get(i + 1).map(|t| t.x0).unwrap_or(self.a);
            out.push((s.x0, x1, s.rho));
        }
        out
    }

    /// Largest density anywhere (used for wavelength estimates).
    pub fn rho_max(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.rho)
            .fold(self.rho_out, f64::max)
    }

    /// Check every invariant; an empty list means the profile is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.segments.is_empty() {
            v.push(Violation::Empty);
            return v;
        }
        if self.a.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            v.push(Violation::NonPositiveLength);
        }
        let positive = |v: f64| v.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater);
        if self.segments.iter().any(|s| !positive(s.rho)) || !positive(self.rho_out) {
            v.push(Violation::NonPositiveDensity);
        }
        let mut edges_ok = self.segments[0].x0 == 0.0;
        for w in self.segments.windows(2) {
            if w[1].x0 <= w[0].x0 || w[1].x0.is_nan() {
                edges_ok = false;
            }
        }
        if let Some(last) = self.segments.last() {
            if last.x0 >= self.a || last.x0.is_nan() {
                edges_ok = false;
            }
        }
        if !edges_ok {
            v.push(Violation::BadSegmentEdges);
        }
        if let Some(last) = self.segments.last() {
            if last.rho == self.rho_out {
                v.push(Violation::NoStepAtBoundary);
            }
        }
        v
    }

    /// Validate and wrap violations in an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(v))
        }
    }
}

/// JSON input accepted by the CLI: either an explicit segment list or a
/// rod given as {"rod": {"n": …, "n0": …, "a": …}}.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Rod { rod: DielectricRod },
    Explicit(CavityProfile),
}

impl ProfileSpec {
    pub fn into_profile(self) -> Result<CavityProfile> {
        let p = match self {
            ProfileSpec::Rod { rod } => DielectricRod::new(rod.n, rod.n0, rod.a)?.profile(),
            ProfileSpec::Explicit(p) => p,
        };
        p.ensure_valid()?;
        Ok(p)
    }
}
