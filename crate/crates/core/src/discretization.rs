//! Finite-difference matrices for the undeformed, deformed and CAP
//! operators on a truncated uniform grid with Dirichlet ends.
//!
//! The deformed kinetic term is the conjugation of `p²` by
//! `U_θ f = φ'^{1/2} f∘φ`, which in one dimension reads
//!
//! ```text
//! p_θ² = -φ'^{-1/2} d/dx ( φ'^{-1} d/dx ( φ'^{-1/2} · ) ).
//! ```
//!
//! It is discretized in that divergence form with a staggered difference
//! `S` (nodes to midpoints): `p_θ² ≈ W Sᵀ diag(1/φ'_{mid}) S W`, `W =
//! diag(φ'^{-1/2})`. The product is complex symmetric, reduces to `-D2`
//! exactly when `θ = 0`, and has no odd-even null modes.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deformation::DeformationProfile;
use crate::potentials::{ChiCutoff, PotentialSpec};
use crate::{Error, Result};

/// Uniform interior grid on `(-L, L)` with Dirichlet ends at `±L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    half_length: f64,
    spacing: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidInput(format!("grid needs N >= 16 nodes, got {n}")));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::InvalidInput(format!("grid half-length must be positive, got {half_length}")));
        }
        let spacing = 2.0 * half_length / (n + 1) as f64;
        let nodes = (1..=n).map(|j| -half_length + spacing * j as f64).collect();
        Ok(Grid1D {
            half_length,
            spacing,
            nodes,
        })
    }

    /// `L = max(12R, 6 ε_min^{-1/4}, feature + 10)`.
    pub fn auto_half_length(r: f64, eps_min: Option<f64>, feature_size: f64) -> f64 {
        let cap = eps_min.map_or(0.0, |e| 6.0 * e.powf(-0.25));
        (12.0 * r).max(cap).max(feature_size + 10.0)
    }

    /// Checks `L ≥ 12R` and, for CAP runs, `L ≥ 6 ε^{-1/4}`.
    pub fn check_coverage(&self, r: f64, eps_min: Option<f64>) -> Result<()> {
        if self.half_length < 12.0 * r {
            return Err(Error::ConstraintViolation(format!(
                "grid half-length {} does not reach the ray region 12R = {}",
                self.half_length,
                12.0 * r
            )));
        }
        if let Some(eps) = eps_min.filter(|&e| e > 0.0) {
            let need = 6.0 * eps.powf(-0.25);
            if self.half_length < need {
                return Err(Error::ConstraintViolation(format!(
                    "grid half-length {} is below 6 eps^(-1/4) = {need} for eps = {eps}",
                    self.half_length
                )));
            }
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Midpoints `x_{j+1/2}`, `j = -1..N-1` (N + 1 of them, including the two
    /// half cells next to the walls).
    pub fn midpoints(&self) -> Vec<f64> {
        (0..=self.len())
            .map(|k| -self.half_length + self.spacing * (k as f64 + 0.5))
            .collect()
    }
}

/// Accuracy order of the staggered difference scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdOrder {
    #[serde(rename = "2")]
    Second,
    #[default]
    #[serde(rename = "4")]
    Fourth,
}

impl FdOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(FdOrder::Second),
            4 => Ok(FdOrder::Fourth),
            o => Err(Error::InvalidInput(format!("unsupported difference order {o}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }
}

/// Odd reflection across the wall: ghost value at index `j` outside
/// `0..n`, expressed as `(sign, interior index)`; the wall node itself is 0.
fn reflect(j: isize, n: usize) -> Option<(f64, usize)> {
    let n = n as isize;
    if (0..n).contains(&j) {
        Some((1.0, j as usize))
    } else if j == -1 || j == n {
        None
    } else if j < -1 {
        let m = -2 - j;
        (m < n).then_some((-1.0, m as usize))
    } else {
        let m = 2 * n - j;
        (m >= 0).then_some((-1.0, m as usize))
    }
}

/// Staggered difference `S`: `(N+1) × N`, nodes to midpoints.
pub fn staggered_difference(grid: &Grid1D, order: FdOrder) -> Mat<f64> {
    let n = grid.len();
    let h = grid.spacing();
    let stencil: &[(isize, f64)] = match order {
        FdOrder::Second => &[(-1, -1.0), (0, 1.0)],
        FdOrder::Fourth => &[(-2, 1.0 / 24.0), (-1, -27.0 / 24.0), (0, 27.0 / 24.0), (1, -1.0 / 24.0)],
    };
    let mut s = Mat::<f64>::zeros(n + 1, n);
    for k in 0..=n {
        // Midpoint k sits between nodes k-1 and k.
        for &(off, c) in stencil {
            if let Some((sign, j)) = reflect(k as isize + off, n) {
                s[(k, j)] += sign * c / h;
            }
        }
    }
    s
}

/// Centered first derivative `D1` and second derivative `D2 = -Sᵀ S`.
pub fn derivative_matrices(grid: &Grid1D, order: FdOrder) -> (Mat<f64>, Mat<f64>) {
    let n = grid.len();
    let h = grid.spacing();
    let stencil: &[(isize, f64)] = match order {
        FdOrder::Second => &[(-1, -0.5), (1, 0.5)],
        FdOrder::Fourth => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
    };
    let mut d1 = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for &(off, c) in stencil {
            if let Some((sign, j)) = reflect(i as isize + off, n) {
                d1[(i, j)] += sign * c / h;
            }
        }
    }
    let s = staggered_difference(grid, order);
    let d2 = -(s.transpose() * &s);
    (d1, d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorTag {
    /// `-Δ + V`.
    H,
    /// `p_θ² + V(φ_θ)`.
    Htheta,
    /// `-Δ - iεx² + V`.
    Heps,
    /// `p_θ² - iεφ_θ² + V(φ_θ)`.
    HepsTheta,
    /// `H_ε(θ) - χ V(φ_θ)`.
    HepsThetaMinusChiV,
}

impl OperatorTag {
    fn uses_theta(self) -> bool {
        matches!(
            self,
            OperatorTag::Htheta | OperatorTag::HepsTheta | OperatorTag::HepsThetaMinusChiV
        )
    }

    fn uses_eps(self) -> bool {
        matches!(
            self,
            OperatorTag::Heps | OperatorTag::HepsTheta | OperatorTag::HepsThetaMinusChiV
        )
    }
}

/// Parameters an [`OperatorMatrix`] was assembled with.
#[derive(Debug, Clone)]
pub struct OperatorParams {
    /// Effective `θ` (zero for undeformed tags).
    pub theta: Complex64,
    /// Effective `ε` (zero for tags without CAP).
    pub eps: f64,
    pub potential: PotentialSpec,
    pub profile: DeformationProfile,
    pub order: FdOrder,
    pub chi: Option<ChiCutoff>,
}

/// Diagonal and kinetic pieces of a deformed operator on a grid.
#[derive(Debug, Clone)]
pub struct OperatorParts {
    /// `p_θ²`.
    pub kinetic: Mat<Complex64>,
    /// `φ_θ(x_j)`.
    pub phi: Vec<Complex64>,
    /// `V(φ_θ(x_j))`.
    pub potential: Vec<Complex64>,
}

impl OperatorParts {
    /// `φ_θ(x_j)²`, the CAP profile.
    pub fn phi_squared(&self) -> Vec<Complex64> {
        self.phi.iter().map(|p| p * p).collect()
    }
}

/// Kinetic term and diagonals for the given `θ` (the profile's cutoff and
/// mode are used, its own `θ` is ignored).
pub fn operator_parts(
    grid: &Grid1D,
    profile: &DeformationProfile,
    theta: Complex64,
    potential: &PotentialSpec,
    order: FdOrder,
) -> Result<OperatorParts> {
    let profile = profile.with_theta(theta)?;
    let n = grid.len();
    let s = staggered_difference(grid, order);
    let mids = grid.midpoints();
    let inv_dphi_mid: Vec<Complex64> = mids.iter().map(|&x| 1.0 / profile.phi(x).1).collect();
    let mut phi = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &x in grid.nodes() {
        let (p, dp) = profile.phi(x);
        phi.push(p);
        w.push(1.0 / dp.sqrt());
    }
    // kinetic = W Sᵀ A S W with banded S; accumulate column by column of S.
    let mut kinetic = Mat::<Complex64>::zeros(n, n);
    let band: Vec<Vec<(usize, f64)>> = (0..=n)
        .map(|k| (0..n).filter(|&j| s[(k, j)] != 0.0).map(|j| (j, s[(k, j)])).collect())
        .collect();
    for (k, row) in band.iter().enumerate() {
        let a = inv_dphi_mid[k];
        for &(i, si) in row {
            for &(j, sj) in row {
                kinetic[(i, j)] += w[i] * si * a * sj * w[j];
            }
        }
    }
    let potential_values = phi
        .iter()
        .map(|&z| potential.eval_complex(z))
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorParts {
        kinetic,
        phi,
        potential: potential_values,
    })
}

/// Dense matrix of one of the operators together with its provenance.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: Mat<Complex64>,
    pub grid: Grid1D,
    pub tag: OperatorTag,
    pub params: OperatorParams,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Diagonal `χ(x_j) V(φ_θ(x_j))` if the operator carries a cutoff.
    pub fn chi_v(&self) -> Option<Vec<Complex64>> {
        let chi = self.params.chi.as_ref()?;
        let parts_theta = if self.tag.uses_theta() {
            self.params.theta
        } else {
            Complex64::new(0.0, 0.0)
        };
        let profile = self.params.profile.with_theta(parts_theta).ok()?;
        self.grid
            .nodes()
            .iter()
            .zip(&chi.values)
            .map(|(&x, &c)| {
                let z = profile.phi(x).0;
                self.params.potential.eval_complex(z).ok().map(|v| c * v)
            })
            .collect()
    }
}

/// Assembles the operator named by `tag`. `θ` comes from the profile for
/// deformed tags and is zero otherwise; `ε` is ignored by tags without CAP.
pub fn assemble(
    tag: OperatorTag,
    grid: &Grid1D,
    profile: &DeformationProfile,
    potential: &PotentialSpec,
    eps: f64,
    chi: Option<&ChiCutoff>,
    order: FdOrder,
) -> Result<OperatorMatrix> {
    let theta = if tag.uses_theta() {
        profile.theta()
    } else {
        Complex64::new(0.0, 0.0)
    };
    let eps = if tag.uses_eps() { eps } else { 0.0 };
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("eps must be >= 0, got {eps}")));
    }
    let chi = match (tag, chi) {
        (OperatorTag::HepsThetaMinusChiV, None) => {
            return Err(Error::InvalidInput("split operator needs a chi cutoff".into()))
        }
        (OperatorTag::HepsThetaMinusChiV, Some(c)) => {
            if c.values.len() != grid.len() {
                return Err(Error::InvalidInput("chi was sampled on a different grid".into()));
            }
            Some(c.clone())
        }
        _ => chi.cloned(),
    };

    let parts = operator_parts(grid, profile, theta, potential, order)?;
    let mut entries = parts.kinetic;
    let n = grid.len();
    for j in 0..n {
        let mut diag = parts.potential[j];
        if eps > 0.0 {
            diag -= Complex64::new(0.0, eps) * parts.phi[j] * parts.phi[j];
        }
        if tag == OperatorTag::HepsThetaMinusChiV {
            let c = chi.as_ref().map_or(0.0, |c| c.values[j]);
            diag -= c * parts.potential[j];
        }
        entries[(j, j)] += diag;
    }
    Ok(OperatorMatrix {
        entries,
        grid: grid.clone(),
        tag,
        params: OperatorParams {
            theta,
            eps,
            potential: potential.clone(),
            profile: profile.with_theta(theta)?,
            order,
            chi,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::DeformationMode;
    use crate::potentials::{Cone, PotentialKind};
    use std::f64::consts::{FRAC_PI_8, PI};

    fn profile(theta: Complex64) -> DeformationProfile {
        DeformationProfile::exterior(1.0, FRAC_PI_8, theta).unwrap()
    }

    fn cone() -> Cone {
        Cone {
            r: 1.0,
            beta0: FRAC_PI_8,
        }
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 10), None);
        assert_eq!(reflect(-2, 10), Some((-1.0, 0)));
        assert_eq!(reflect(10, 10), None);
        assert_eq!(reflect(11, 10), Some((-1.0, 9)));
        assert_eq!(reflect(3, 10), Some((1.0, 3)));
    }

    #[test]
    fn second_derivative_on_box_mode() {
        for &(n, order, tol) in &[(200usize, FdOrder::Fourth, 2e-6), (200, FdOrder::Second, 2e-3)] {
            let grid = Grid1D::new(5.0, n).unwrap();
            let (_, d2) = derivative_matrices(&grid, order);
            let k = PI / 5.0;
            let f: Vec<f64> = grid.nodes().iter().map(|&x| (k * x).sin()).collect();
            let mut worst = 0.0f64;
            for i in 0..n {
                let got: f64 = (0..n).map(|j| d2[(i, j)] * f[j]).sum();
                worst = worst.max((got + k * k * f[i]).abs());
            }
            assert!(worst < tol, "order {order:?}: {worst:e}");
        }
    }

    #[test]
    fn fourth_order_convergence_of_d2() {
        let err = |n: usize| {
            let grid = Grid1D::new(5.0, n).unwrap();
            let (_, d2) = derivative_matrices(&grid, FdOrder::Fourth);
            let k = 3.0 * PI / 10.0;
            let f: Vec<f64> = grid.nodes().iter().map(|&x| (k * (x + 5.0)).sin()).collect();
            (0..n)
                .map(|i| ((0..n).map(|j| d2[(i, j)] * f[j]).sum::<f64>() + k * k * f[i]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(99) / err(199);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn first_derivative_of_constant_vanishes_inside() {
        let grid = Grid1D::new(3.0, 64).unwrap();
        let (d1, _) = derivative_matrices(&grid, FdOrder::Fourth);
        for i in 2..62 {
            let s: f64 = (0..64).map(|j| d1[(i, j)]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn htheta_at_zero_is_h() {
        let grid = Grid1D::new(14.0, 120).unwrap();
        let v = PotentialSpec::new(PotentialKind::PoschlTeller { v0: 4.0 }, cone()).unwrap();
        let p0 = profile(Complex64::new(0.0, 0.0));
        let h = assemble(OperatorTag::H, &grid, &p0, &v, 0.0, None, FdOrder::Fourth).unwrap();
        let ht = assemble(OperatorTag::Htheta, &grid, &p0, &v, 0.0, None, FdOrder::Fourth).unwrap();
        assert_eq!(h.entries, ht.entries);
        let pt = profile(Complex64::new(0.0, 0.3));
        let h_via_theta = assemble(OperatorTag::H, &grid, &pt, &v, 0.0, None, FdOrder::Fourth).unwrap();
        assert_eq!(h.entries, h_via_theta.entries);
    }

    #[test]
    fn global_dilation_exact_form() {
        let grid = Grid1D::new(15.0, 100).unwrap();
        let theta = Complex64::new(0.05, 0.2);
        let p = profile(theta).with_mode(DeformationMode::GlobalDilation);
        let v = PotentialSpec::free(cone());
        let eps = 0.04;
        let m = assemble(OperatorTag::HepsTheta, &grid, &p, &v, eps, None, FdOrder::Fourth).unwrap();
        let (_, d2) = derivative_matrices(&grid, FdOrder::Fourth);
        let s = 1.0 + theta;
        let mut worst = 0.0f64;
        for i in 0..100 {
            for j in 0..100 {
                let mut expect = -d2[(i, j)] / (s * s);
                if i == j {
                    let x = grid.nodes()[i];
                    expect -= Complex64::new(0.0, eps) * s * s * x * x;
                }
                worst = worst.max((m.entries[(i, j)] - expect).norm());
            }
        }
        assert!(worst < 1e-11, "{worst:e}");
    }

    #[test]
    fn kinetic_is_complex_symmetric() {
        let grid = Grid1D::new(14.0, 300).unwrap();
        let p = profile(Complex64::new(0.1, 0.25));
        let v = PotentialSpec::new(PotentialKind::GaussianBump { v0: 2.0, sigma: 1.0 }, cone()).unwrap();
        let m = assemble(OperatorTag::HepsTheta, &grid, &p, &v, 0.01, None, FdOrder::Fourth).unwrap();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..300 {
            for j in 0..300 {
                worst = worst.max((m.entries[(i, j)] - m.entries[(j, i)]).norm());
                scale = scale.max(m.entries[(i, j)].norm());
            }
        }
        assert!(worst / scale < 1e-12, "{}", worst / scale);
    }

    #[test]
    fn symmetry_by_tag() {
        let grid = Grid1D::new(14.0, 60).unwrap();
        let p = profile(Complex64::new(0.0, 0.2));
        let v = PotentialSpec::new(PotentialKind::PoschlTeller { v0: 4.0 }, cone()).unwrap();
        let h = assemble(OperatorTag::H, &grid, &p, &v, 0.3, None, FdOrder::Fourth).unwrap();
        assert!(h.entries.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).all(|z| z.im == 0.0));
        let he = assemble(OperatorTag::Heps, &grid, &p, &v, 0.3, None, FdOrder::Fourth).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                assert_eq!(h.entries[(i, j)], h.entries[(j, i)]);
                assert_eq!(he.entries[(i, j)], he.entries[(j, i)]);
            }
        }
    }

    #[test]
    fn split_operator_subtracts_chi_v() {
        let grid = Grid1D::new(14.0, 80).unwrap();
        let p = profile(Complex64::new(0.0, 0.2));
        let v = PotentialSpec::new(PotentialKind::PoschlTeller { v0: 4.0 }, cone()).unwrap();
        let chi = crate::potentials::build_chi(&grid, 3.0, 1.5).unwrap();
        let full = assemble(OperatorTag::HepsTheta, &grid, &p, &v, 0.02, None, FdOrder::Fourth).unwrap();
        let split = assemble(OperatorTag::HepsThetaMinusChiV, &grid, &p, &v, 0.02, Some(&chi), FdOrder::Fourth).unwrap();
        let chi_v = split.chi_v().unwrap();
        for i in 0..80 {
            for j in 0..80 {
                let mut d = full.entries[(i, j)] - split.entries[(i, j)];
                if i == j {
                    d -= chi_v[i];
                }
                assert!(d.norm() < 1e-12);
            }
        }
        assert!(matches!(
            assemble(OperatorTag::HepsThetaMinusChiV, &grid, &p, &v, 0.02, None, FdOrder::Fourth),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn auto_length_rule() {
        assert_eq!(Grid1D::auto_half_length(1.0, None, 0.0), 12.0);
        let l = Grid1D::auto_half_length(1.0, Some(1e-4), 17.0);
        assert!((l - 60.0).abs() < 1e-9);
        let g = Grid1D::new(20.0, 100).unwrap();
        assert!(g.check_coverage(1.0, Some(0.04)).is_ok());
        assert!(g.check_coverage(2.0, None).is_err());
        assert!(g.check_coverage(1.0, Some(1e-4)).is_err());
    }
}
