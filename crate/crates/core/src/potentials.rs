//! Closed-form potentials, their continuation into the truncated cone
//! `C^R_β₀ = { |Im z| < tan β₀ |Re z|, |Re z| > R }`, and the compactly
//! supported cutoff `χ`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deformation::{BumpShape, DeformationProfile, SmoothStep};
use crate::discretization::Grid1D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    /// `V0` on `|x| < a`, zero elsewhere.
    SquareWell {
        #[serde(rename = "V0")]
        v0: f64,
        a: f64,
    },
    /// `V0 exp(-(x/σ)²)`.
    GaussianBump {
        #[serde(rename = "V0")]
        v0: f64,
        sigma: f64,
    },
    /// `V0 sech²(x)`.
    PoschlTeller {
        #[serde(rename = "V0")]
        v0: f64,
    },
}

impl PotentialKind {
    /// Length beyond which the potential is negligible (or zero).
    pub fn feature_size(&self) -> f64 {
        match *self {
            PotentialKind::Free => 0.0,
            PotentialKind::SquareWell { a, .. } => a,
            PotentialKind::GaussianBump { sigma, .. } => 6.0 * sigma,
            // 4 sech²(x) < 1e-14 for x > 17.
            PotentialKind::PoschlTeller { .. } => 17.0,
        }
    }
}

/// Truncated cone `{ |Im z| ≤ tan β₀ |Re z|, |Re z| ≥ R }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub r: f64,
    pub beta0: f64,
}

impl Cone {
    pub fn from_profile(profile: &DeformationProfile) -> Self {
        Cone {
            r: profile.r(),
            beta0: profile.beta0(),
        }
    }

    /// Membership in the closed cone, with a relative slack for points
    /// produced by `φ_θ` on the boundary of the aperture.
    pub fn contains(&self, z: Complex64) -> bool {
        let slack = 1e-12;
        z.re.abs() >= self.r * (1.0 - slack)
            && z.im.abs() <= self.beta0.tan() * z.re.abs() * (1.0 + slack)
    }

    /// Distance from `p` to the closed set `ℝ ∪ cone`.
    pub fn distance_from(&self, p: Complex64) -> f64 {
        let t = self.beta0.tan();
        // Each lobe is convex; fold the point into the right upper quadrant.
        let q = Complex64::new(p.re.abs(), p.im.abs());
        if q.re >= self.r && q.im <= t * q.re {
            return 0.0;
        }
        let corner = Complex64::new(self.r, t * self.r);
        let dir = Complex64::new(1.0, t) / (1.0 + t * t).sqrt();
        let along = ((q - corner) * dir.conj()).re.max(0.0);
        let to_edge = (q - corner - dir * along).norm();
        let to_side = if q.im <= corner.im {
            (q.re - self.r).abs()
        } else {
            (q - corner).norm()
        };
        q.im.min(to_edge).min(to_side)
    }
}

/// A potential together with the cone it is continued into.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub cone: Cone,
    /// Distance from `ℝ ∪ C^R_β₀` to the nearest singularity of the
    /// continuation; infinite for entire or compactly supported kinds.
    pub pole_clearance: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, cone: Cone) -> Result<Self> {
        let pole_clearance = match kind {
            PotentialKind::Free => f64::INFINITY,
            PotentialKind::SquareWell { a, v0 } => {
                if !(a > 0.0 && v0.is_finite()) {
                    return Err(Error::InvalidInput(format!("square well needs a > 0, got {a}")));
                }
                if a > cone.r {
                    return Err(Error::DomainViolation(format!(
                        "square well edge a = {a} lies beyond the exterior radius R = {}",
                        cone.r
                    )));
                }
                f64::INFINITY
            }
            PotentialKind::GaussianBump { sigma, v0 } => {
                if !(sigma > 0.0 && v0.is_finite()) {
                    return Err(Error::InvalidInput(format!("gaussian bump needs sigma > 0, got {sigma}")));
                }
                f64::INFINITY
            }
            PotentialKind::PoschlTeller { v0 } => {
                if !v0.is_finite() {
                    return Err(Error::InvalidInput("Poschl-Teller V0 must be finite".into()));
                }
                // sech² has double poles at ±iπ(n + 1/2); the nearest pair
                // bounds the clearance.
                cone.distance_from(Complex64::new(0.0, FRAC_PI_2))
            }
        };
        if !(pole_clearance > 0.0) {
            return Err(Error::DomainViolation(format!(
                "{kind:?} has a singularity inside the closed cone"
            )));
        }
        Ok(PotentialSpec {
            kind,
            cone,
            pole_clearance,
        })
    }

    pub fn free(cone: Cone) -> Self {
        PotentialSpec {
            kind: PotentialKind::Free,
            cone,
            pole_clearance: f64::INFINITY,
        }
    }

    /// Nearest singularity of the continuation to `z`, if any.
    fn nearest_singularity(&self, z: Complex64) -> Option<f64> {
        match self.kind {
            PotentialKind::PoschlTeller { .. } => {
                let n = (z.im.abs() / PI - 0.5).round().max(0.0);
                let pole = Complex64::new(0.0, z.im.signum() * PI * (n + 0.5));
                Some((z - pole).norm())
            }
            _ => None,
        }
    }

    /// Value of `V` at a real point.
    pub fn eval_real(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::SquareWell { v0, a } => {
                if x.abs() < a {
                    v0
                } else {
                    0.0
                }
            }
            PotentialKind::GaussianBump { v0, sigma } => v0 * (-(x / sigma).powi(2)).exp(),
            PotentialKind::PoschlTeller { v0 } => {
                let s = 1.0 / x.cosh();
                v0 * s * s
            }
        }
    }

    /// Analytic continuation of `V` at `z ∈ ℝ ∪ C^R_β₀`.
    pub fn eval_complex(&self, z: Complex64) -> Result<Complex64> {
        if self.kind == PotentialKind::Free {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if z.im == 0.0 {
            return Ok(Complex64::new(self.eval_real(z.re), 0.0));
        }
        if !self.cone.contains(z) {
            return Err(Error::DomainViolation(format!(
                "z = {z} is outside the real axis and the cone (R = {}, beta0 = {})",
                self.cone.r, self.cone.beta0
            )));
        }
        if let Some(d) = self.nearest_singularity(z) {
            if d < 0.5 * self.pole_clearance {
                return Err(Error::DomainViolation(format!(
                    "z = {z} is within {d} of a singularity of the continuation"
                )));
            }
        }
        Ok(match self.kind {
            PotentialKind::Free => Complex64::new(0.0, 0.0),
            PotentialKind::SquareWell { v0, a } => {
                if z.re.abs() > a {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(v0, 0.0)
                }
            }
            PotentialKind::GaussianBump { v0, sigma } => v0 * (-(z / sigma).powi(2)).exp(),
            PotentialKind::PoschlTeller { v0 } => v0 * sech_sq(z),
        })
    }
}

/// `sech²(z)` without overflow for large `|Re z|`.
fn sech_sq(z: Complex64) -> Complex64 {
    let w = if z.re < 0.0 { -z } else { z };
    let e = (-2.0 * w).exp();
    let s = 2.0 * (-w).exp() / (1.0 + e);
    s * s
}

/// `sup |V|` over points of the closed cone at each radius: the real
/// point, the two aperture edges and interior angles in between.
pub fn decay_profile(spec: &PotentialSpec, profile: &DeformationProfile, radii: &[f64]) -> Result<Vec<f64>> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("radii must be strictly increasing".into()));
    }
    let beta = profile.beta0();
    let angles = 16;
    Ok(radii
        .iter()
        .map(|&rad| {
            let mut sup = 0.0f64;
            for k in 0..=angles {
                let ang = -beta + 2.0 * beta * k as f64 / angles as f64;
                for base in [0.0, PI] {
                    let z = Complex64::from_polar(rad, base + ang);
                    let v = if rad >= spec.cone.r || ang == 0.0 {
                        spec.eval_complex(z).map(|v| v.norm()).unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    sup = sup.max(v);
                }
            }
            sup
        })
        .collect())
}

/// Smooth cutoff with `χ ≡ 1` on `[-T, T]` and `χ ≡ 0` outside
/// `[-T - width, T + width]`, sampled on a grid.
#[derive(Debug, Clone)]
pub struct ChiCutoff {
    pub t: f64,
    pub width: f64,
    pub values: Vec<f64>,
}

impl ChiCutoff {
    /// Indices of the grid nodes where `χ ≠ 0`.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn build_chi(grid: &Grid1D, t: f64, width: f64) -> Result<ChiCutoff> {
    if !(t > 0.0 && width > 0.0) {
        return Err(Error::InvalidInput(format!("chi needs T > 0 and width > 0, got {t}, {width}")));
    }
    if t + width >= grid.half_length() {
        return Err(Error::DomainViolation(format!(
            "chi support T + width = {} reaches the grid edge L = {}",
            t + width,
            grid.half_length()
        )));
    }
    let step = SmoothStep::new(BumpShape::SYMMETRIC, 2_000)?;
    let values = grid
        .nodes()
        .iter()
        .map(|&x| 1.0 - step.eval((x.abs() - t) / width).0)
        .collect();
    Ok(ChiCutoff { t, width, values })
}
