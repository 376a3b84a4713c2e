//! Reading resonances off discrete spectra: sector windows, θ-matching,
//! contour multiplicities (direct trace and split log-derivative forms),
//! resolvent-norm probes and the adaptive choice of the cutoff `χ`.

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::a_of_theta;
use crate::discretization::Grid1D;
use crate::eigensolver::{ShiftedSolver, Spectrum};
use crate::potentials::{build_chi, ChiCutoff};
use crate::{Error, Result};

/// Default half-aperture excluded around the essential ray.
pub const ESSENTIAL_MARGIN_DEFAULT: f64 = 5.0 * PI / 180.0;
/// Eigenvalues closer to zero than this are never reported.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;
/// Largest admissible distance from an integer for a multiplicity.
pub const ROUNDING_TOLERANCE: f64 = 0.05;

/// Angle of `z` lifted into `(-2a, 2π - 2a]`, the branch on which the
/// sector `S_θ⁻` is an interval.
pub fn lifted_arg(z: Complex64, a: f64) -> f64 {
    let t = z.arg();
    if t <= -2.0 * a {
        t + 2.0 * PI
    } else {
        t
    }
}

/// Annular sector `{ arg_min ≤ arg z ≤ arg_max, r_min ≤ |z| ≤ r_max }`
/// with a wedge of half-aperture `essential_margin` removed around the
/// rotated continuum `arg z = -2a(θ)`. Angles use [`lifted_arg`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorWindow {
    pub arg_min: f64,
    pub arg_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub essential_margin: f64,
}

impl SectorWindow {
    /// The whole admissible sector for `θ`, shrunk by the margin.
    pub fn full(theta: Complex64, r_max: f64) -> Self {
        let a = a_of_theta(theta);
        let m = ESSENTIAL_MARGIN_DEFAULT;
        SectorWindow {
            arg_min: -2.0 * a + m,
            arg_max: 1.5 * PI + 2.0 * a - m,
            r_min: MAGNITUDE_FLOOR,
            r_max,
            essential_margin: m,
        }
    }

    /// Smallest annular sector containing the disk `B(center, radius)`.
    pub fn around(center: Complex64, radius: f64) -> Result<Self> {
        let r = center.norm();
        if !(radius > 0.0 && radius < r) {
            return Err(Error::InvalidInput(format!(
                "disk of radius {radius} around {center} must exclude the origin"
            )));
        }
        let half = (radius / r).asin();
        let t = center.arg();
        Ok(SectorWindow {
            arg_min: t - half,
            arg_max: t + half,
            r_min: r - radius,
            r_max: r + radius,
            essential_margin: ESSENTIAL_MARGIN_DEFAULT,
        })
    }

    /// Checks that the window closes inside `{-2a < arg z < 3π/2 + 2a}`.
    pub fn validate(&self, theta: Complex64) -> Result<()> {
        let a = a_of_theta(theta);
        if !(self.arg_min < self.arg_max && self.r_min >= 0.0 && self.r_min < self.r_max && self.essential_margin >= 0.0) {
            return Err(Error::InvalidInput(format!("malformed window {self:?}")));
        }
        let (lo, hi) = self.lifted_range(a);
        if !(lo > -2.0 * a && hi < 1.5 * PI + 2.0 * a) {
            return Err(Error::InvalidInput(format!(
                "window angles [{:.4}, {:.4}] leave the sector (-2a, 3pi/2 + 2a) with a = {a:.4}",
                self.arg_min, self.arg_max
            )));
        }
        Ok(())
    }

    fn lifted_range(&self, a: f64) -> (f64, f64) {
        // Shift the configured interval onto the lifted branch.
        let shift = if self.arg_min <= -2.0 * a { 2.0 * PI } else { 0.0 };
        let lo = self.arg_min + shift;
        let hi = self.arg_max + shift;
        (lo, hi)
    }

    /// Membership for a spectrum computed at `θ`.
    pub fn contains(&self, z: Complex64, theta: Complex64) -> bool {
        let a = a_of_theta(theta);
        let r = z.norm();
        if r < MAGNITUDE_FLOOR.max(self.r_min) || r > self.r_max {
            return false;
        }
        let t = lifted_arg(z, a);
        let (lo, hi) = self.lifted_range(a);
        let ray = -2.0 * a;
        let off_ray = (t - ray).abs().min((t - ray - 2.0 * PI).abs());
        t >= lo && t <= hi && off_ray > self.essential_margin
    }
}

/// Sub-spectrum inside the window, order preserved.
pub fn filter_sector(spec: &Spectrum, window: &SectorWindow) -> Spectrum {
    let theta = spec.meta.theta;
    spec.retain(|z| window.contains(z, theta))
}

/// Eigenvalues with `Im z > rel · max(1, |z|)`.
pub fn upper_half_plane_excursions(spec: &Spectrum, rel: f64) -> Vec<Complex64> {
    spec.eigenvalues
        .iter()
        .copied()
        .filter(|z| z.im > rel * z.norm().max(1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `(a, b)` pairs, in the order of the first spectrum.
    pub pairs: Vec<(Complex64, Complex64)>,
    pub max_distance: f64,
    pub max_relative_distance: f64,
    pub unmatched_a: Vec<Complex64>,
    pub unmatched_b: Vec<Complex64>,
}

/// Greedy nearest-neighbour pairing of the windowed eigenvalues of two
/// spectra. Partners may lie just outside the window so that eigenvalues
/// sitting on the window edge are not reported as unmatched. A pair counts
/// only if `|a - b| ≤ tol · max(|a|, |b|)`.
pub fn match_spectra(a: &Spectrum, b: &Spectrum, window: &SectorWindow, tol: f64) -> Result<MatchReport> {
    let in_a: Vec<Complex64> = filter_sector(a, window).eigenvalues;
    let in_b: Vec<Complex64> = filter_sector(b, window).eigenvalues;
    let close = |x: Complex64, y: Complex64| (x - y).norm() <= tol * x.norm().max(y.norm());

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &x) in in_a.iter().enumerate() {
        for (j, &y) in b.eigenvalues.iter().enumerate() {
            if close(x, y) {
                candidates.push(((x - y).norm(), i, j));
            }
        }
    }
    candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; in_a.len()];
    let mut used_b = vec![false; b.eigenvalues.len()];
    let mut pairs_idx = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs_idx.push((i, j));
        }
    }
    pairs_idx.sort();
    let pairs: Vec<(Complex64, Complex64)> = pairs_idx.iter().map(|&(i, j)| (in_a[i], b.eigenvalues[j])).collect();
    let unmatched_a: Vec<Complex64> = in_a.iter().zip(&used_a).filter(|(_, u)| !**u).map(|(z, _)| *z).collect();
    // Windowed eigenvalues of b not claimed by any a-eigenvalue, unless an
    // a-eigenvalue just outside the window is within tolerance.
    let unmatched_b: Vec<Complex64> = in_b
        .iter()
        .copied()
        .filter(|&y| {
            let claimed = pairs.iter().any(|p| p.1 == y);
            !claimed && !a.eigenvalues.iter().any(|&x| close(x, y) && !in_a.contains(&x))
        })
        .collect();
    let max_distance = pairs.iter().map(|p| (p.0 - p.1).norm()).fold(0.0, f64::max);
    let max_relative_distance = pairs
        .iter()
        .map(|p| (p.0 - p.1).norm() / p.0.norm().max(p.1.norm()))
        .fold(0.0, f64::max);
    let unmatched = unmatched_a.len() + unmatched_b.len();
    if unmatched > 0 {
        return Err(Error::MatchFailure {
            unmatched,
            max_distance,
        });
    }
    Ok(MatchReport {
        pairs,
        max_distance,
        max_relative_distance,
        unmatched_a,
        unmatched_b,
    })
}

/// Positively oriented circle sampled by the trapezoidal rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: Complex64,
    pub radius: f64,
    pub nodes: usize,
}

impl ContourSpec {
    pub fn new(center: Complex64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || nodes < 4 || nodes % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "contour needs radius > 0 and an even node count >= 4 (radius {radius}, nodes {nodes})"
            )));
        }
        Ok(ContourSpec { center, radius, nodes })
    }

    /// `(w_k, e^{iφ_k})` for `φ_k = 2πk / nodes`.
    pub fn points(&self) -> Vec<(Complex64, Complex64)> {
        (0..self.nodes)
            .map(|k| {
                let u = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.nodes as f64);
                (self.center + self.radius * u, u)
            })
            .collect()
    }

    /// Circle keeps `margin` (angle) away from the ray `arg z = -2a(θ)`
    /// and does not enclose the origin.
    pub fn check_ray_clearance(&self, theta: Complex64, margin: f64) -> Result<()> {
        let r = self.center.norm();
        if r <= self.radius {
            return Err(Error::InvalidInput(format!(
                "contour around {} with radius {} encloses the origin",
                self.center, self.radius
            )));
        }
        let a = a_of_theta(theta);
        let ray = Complex64::from_polar(1.0, -2.0 * a);
        let off = (self.center / ray).arg().abs();
        let half = (self.radius / r).asin();
        if off - half <= margin {
            return Err(Error::InvalidInput(format!(
                "contour around {} comes within {:.4} rad of the essential ray",
                self.center,
                off - half
            )));
        }
        Ok(())
    }

    /// No eigenvalue within `radius / 10` of the circle.
    pub fn check_spectral_gap(&self, eigenvalues: &[Complex64]) -> Result<()> {
        for z in eigenvalues {
            let d = ((z - self.center).norm() - self.radius).abs();
            if d < 0.1 * self.radius {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {z} lies within {d:.3e} of the contour"
                )));
            }
        }
        Ok(())
    }

    /// Eigenvalues strictly inside the disk.
    pub fn count_inside(&self, eigenvalues: &[Complex64]) -> usize {
        eigenvalues.iter().filter(|z| (*z - self.center).norm() < self.radius).count()
    }
}

/// Trapezoidal sums `(r/M) Σ f(w_k) e^{iφ_k}` over the full rule and over
/// its even-indexed half.
fn circle_sums(c: &ContourSpec, values: &[Complex64]) -> (Complex64, Complex64) {
    let pts = c.points();
    let mut full = Complex64::new(0.0, 0.0);
    let mut half = Complex64::new(0.0, 0.0);
    for (k, ((_, u), f)) in pts.iter().zip(values).enumerate() {
        full += f * u;
        if k % 2 == 0 {
            half += f * u;
        }
    }
    let m = c.nodes as f64;
    (full * c.radius / m, half * c.radius / (0.5 * m))
}

/// `-(1/2πi) ∮ tr (A - z)⁻¹ dz` and the gap to the half-node rule.
pub fn multiplicity_direct_with_gap(a: MatRef<'_, Complex64>, c: &ContourSpec) -> Result<(Complex64, f64)> {
    let traces: Vec<Result<Complex64>> = c
        .points()
        .par_iter()
        .map(|&(w, _)| Ok(ShiftedSolver::new(a, w)?.trace_inverse()))
        .collect();
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let (full, half) = circle_sums(c, &traces);
    Ok((-full, (full - half).norm()))
}

/// `-(1/2πi) ∮ tr (A - z)⁻¹ dz`, the number of eigenvalues inside the circle.
pub fn multiplicity_direct(a: MatRef<'_, Complex64>, c: &ContourSpec) -> Result<Complex64> {
    Ok(multiplicity_direct_with_gap(a, c)?.0)
}

/// `(1/2πi) ∮ tr[(I + R χV)⁻¹ R² χV] dw` with `R = (A_split - w)⁻¹`.
///
/// `χV` is diagonal, so the trace reduces to its support `S`:
/// `tr[(I_S + (RχV)_SS)⁻¹ (R²χV)_SS]`.
pub fn multiplicity_logderiv(a_split: MatRef<'_, Complex64>, chi_v: &[Complex64], c: &ContourSpec) -> Result<Complex64> {
    let n = a_split.nrows();
    if chi_v.len() != n {
        return Err(Error::InvalidInput("chi V has the wrong length".into()));
    }
    let support: Vec<usize> = (0..n).filter(|&i| chi_v[i] != Complex64::new(0.0, 0.0)).collect();
    if support.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s = support.len();
    let e_s = Mat::<Complex64>::from_fn(n, s, |i, j| {
        if i == support[j] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let integrand = |w: Complex64| -> Result<Complex64> {
        let solver = ShiftedSolver::new(a_split, w).map_err(|_| Error::SplitInvertibilityFailure { w })?;
        let y = solver.solve(e_s.as_ref());
        let ry = solver.solve(y.as_ref());
        // I + (RχV)_SS and (R²χV)_SS
        let m = Mat::<Complex64>::from_fn(s, s, |i, j| {
            let d = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            d + y[(support[i], j)] * chi_v[support[j]]
        });
        let rhs = Mat::<Complex64>::from_fn(s, s, |i, j| ry[(support[i], j)] * chi_v[support[j]]);
        let lu = m.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..s {
            lo = lo.min(u[(i, i)].norm());
            hi = hi.max(u[(i, i)].norm());
        }
        if !(lo > crate::eigensolver::RCOND_FLOOR * hi) {
            return Err(Error::SplitInvertibilityFailure { w });
        }
        use faer::linalg::solvers::Solve;
        let x = lu.solve(rhs.as_ref());
        Ok((0..s).map(|i| x[(i, i)]).sum())
    };
    let values: Vec<Result<Complex64>> = c.points().par_iter().map(|&(w, _)| integrand(w)).collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(circle_sums(c, &values).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub center: Complex64,
    pub radius: f64,
    pub m_direct: Complex64,
    pub m_logderiv: Complex64,
    pub rounded: i64,
    /// `|m_direct - m_logderiv|`.
    pub gap: f64,
    /// `|m_direct(M nodes) - m_direct(M/2 nodes)|`.
    pub quadrature_gap: f64,
}

impl MultiplicityReport {
    pub fn new(c: &ContourSpec, m_direct: Complex64, m_logderiv: Complex64, quadrature_gap: f64) -> Self {
        MultiplicityReport {
            center: c.center,
            radius: c.radius,
            m_direct,
            m_logderiv,
            rounded: m_direct.re.round() as i64,
            gap: (m_direct - m_logderiv).norm(),
            quadrature_gap,
        }
    }

    /// Both values within the rounding tolerance of the same integer.
    pub fn passes(&self) -> bool {
        (self.m_direct - self.rounded as f64).norm() < ROUNDING_TOLERANCE && self.gap < ROUNDING_TOLERANCE
    }
}

/// Both multiplicity formulas on one contour.
pub fn multiplicity_report(
    h: MatRef<'_, Complex64>,
    a_split: MatRef<'_, Complex64>,
    chi_v: &[Complex64],
    c: &ContourSpec,
) -> Result<MultiplicityReport> {
    let (m_direct, qgap) = multiplicity_direct_with_gap(h, c)?;
    let m_logderiv = multiplicity_logderiv(a_split, chi_v, c)?;
    Ok(MultiplicityReport::new(c, m_direct, m_logderiv, qgap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormProbeKind {
    Plain,
    Weighted,
    Teps,
}

/// Operator whose norm is probed at each `z`.
pub enum ProbeTarget<'a> {
    /// `‖(A - z)⁻¹‖`.
    Plain { a: MatRef<'a, Complex64> },
    /// `‖⟨x⟩² (A - z)⁻¹ ⟨x⟩⁻²‖` with `⟨x⟩² = 1 + x²`.
    Weighted { a: MatRef<'a, Complex64>, x: &'a [f64] },
    /// `‖(A_ε - z)⁻¹ φ² (A_0 - z)⁻¹ χV‖` for the split operators
    /// `A_ε = H_ε(θ) - χV`, `A_0 = H(θ) - χV`.
    Teps {
        a_eps: MatRef<'a, Complex64>,
        a_zero: MatRef<'a, Complex64>,
        phi_sq: &'a [Complex64],
        chi_v: &'a [Complex64],
    },
}

impl ProbeTarget<'_> {
    pub fn kind(&self) -> NormProbeKind {
        match self {
            ProbeTarget::Plain { .. } => NormProbeKind::Plain,
            ProbeTarget::Weighted { .. } => NormProbeKind::Weighted,
            ProbeTarget::Teps { .. } => NormProbeKind::Teps,
        }
    }
}

const POWER_ITERATIONS: usize = 300;
const POWER_TOL: f64 = 1e-9;

/// Largest singular value of `B` by power iteration on `B*B`, started
/// from a fixed vector.
pub fn spectral_norm(n: usize, apply: impl Fn(&Mat<Complex64>) -> Mat<Complex64>, apply_adj: impl Fn(&Mat<Complex64>) -> Mat<Complex64>) -> f64 {
    let mut x = Mat::<Complex64>::from_fn(n, 1, |i, _| Complex64::new(1.0 + (0.37 * i as f64).sin(), (1.3 * i as f64).cos()));
    let norm = |m: &Mat<Complex64>| m.norm_l2();
    let nx = norm(&x);
    x = &x * faer::Scale(Complex64::new(1.0 / nx, 0.0));
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let bx = apply(&x);
        let s = norm(&bx);
        let y = apply_adj(&bx);
        let ny = norm(&y);
        if !(ny > 0.0) {
            return s;
        }
        x = &y * faer::Scale(Complex64::new(1.0 / ny, 0.0));
        let done = (s - sigma).abs() <= POWER_TOL * s;
        sigma = s;
        if done {
            break;
        }
    }
    sigma
}

fn scale_rows(m: &Mat<Complex64>, d: &[Complex64]) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

/// Norm estimates for every `z` in the list.
pub fn norm_probe(target: &ProbeTarget<'_>, zs: &[Complex64]) -> Result<Vec<f64>> {
    zs.iter()
        .map(|&z| match *target {
            ProbeTarget::Plain { a } => {
                let s = ShiftedSolver::new(a, z)?;
                Ok(spectral_norm(a.nrows(), |v| s.solve(v.as_ref()), |v| s.solve_adjoint(v.as_ref())))
            }
            ProbeTarget::Weighted { a, x } => {
                let s = ShiftedSolver::new(a, z)?;
                let w: Vec<Complex64> = x.iter().map(|&x| Complex64::new(1.0 + x * x, 0.0)).collect();
                let winv: Vec<Complex64> = w.iter().map(|v| 1.0 / v).collect();
                Ok(spectral_norm(
                    a.nrows(),
                    |v| scale_rows(&s.solve(scale_rows(v, &winv).as_ref()), &w),
                    |v| scale_rows(&s.solve_adjoint(scale_rows(v, &w).as_ref()), &winv),
                ))
            }
            ProbeTarget::Teps {
                a_eps,
                a_zero,
                phi_sq,
                chi_v,
            } => {
                let s_eps = ShiftedSolver::new(a_eps, z)?;
                let s_zero = ShiftedSolver::new(a_zero, z)?;
                let phi_c: Vec<Complex64> = phi_sq.iter().map(|p| p.conj()).collect();
                let chi_c: Vec<Complex64> = chi_v.iter().map(|p| p.conj()).collect();
                Ok(spectral_norm(
                    a_eps.nrows(),
                    |v| s_eps.solve(scale_rows(&s_zero.solve(scale_rows(v, chi_v).as_ref()), phi_sq).as_ref()),
                    |v| scale_rows(&s_zero.solve_adjoint(scale_rows(&s_eps.solve_adjoint(v.as_ref()), &phi_c).as_ref()), &chi_c),
                ))
            }
        })
        .collect()
}

/// Outcome of the adaptive cutoff search.
#[derive(Debug, Clone)]
pub struct ChiSelection {
    pub chi: ChiCutoff,
    /// `max_w ‖R_free(w) (1 - χ)V‖` over the contour nodes.
    pub neumann_norm: f64,
    /// Radii tried, in order.
    pub tried: Vec<f64>,
}

/// Grows `T` from `t0` in steps of `t_step` until the Neumann condition
/// `‖R_free(w) (1 - χ) V‖ < 1/2` holds at every contour node, where
/// `R_free` is the resolvent of the deformed operator without potential.
pub fn select_chi(
    free_op: MatRef<'_, Complex64>,
    potential: &[Complex64],
    grid: &Grid1D,
    contour: &ContourSpec,
    t0: f64,
    width: f64,
    t_step: f64,
) -> Result<ChiSelection> {
    if !(t_step > 0.0) {
        return Err(Error::InvalidInput("chi growth step must be positive".into()));
    }
    let mut tried = Vec::new();
    let mut t = t0;
    let solvers: Vec<ShiftedSolver> = contour
        .points()
        .iter()
        .map(|&(w, _)| ShiftedSolver::new(free_op, w))
        .collect::<Result<_>>()?;
    loop {
        let chi = build_chi(grid, t, width)?;
        tried.push(t);
        let tail: Vec<Complex64> = potential.iter().zip(&chi.values).map(|(v, c)| v * (1.0 - c)).collect();
        let tail_c: Vec<Complex64> = tail.iter().map(|v| v.conj()).collect();
        let worst = if tail.iter().all(|v| v.norm() == 0.0) {
            0.0
        } else {
            solvers
                .par_iter()
                .map(|s| {
                    spectral_norm(
                        free_op.nrows(),
                        |v| s.solve(scale_rows(v, &tail).as_ref()),
                        |v| scale_rows(&s.solve_adjoint(v.as_ref()), &tail_c),
                    )
                })
                .collect::<Vec<f64>>()
                .into_iter()
                .fold(0.0, f64::max)
        };
        if worst < 0.5 {
            return Ok(ChiSelection {
                chi,
                neumann_norm: worst,
                tried,
            });
        }
        t += t_step;
        if t + width >= grid.half_length() {
            return Err(Error::SplitInvertibilityFailure { w: contour.center });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::{eig_matrix, EigOptions, SpectrumMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum(eigs: Vec<Complex64>, theta: Complex64) -> Spectrum {
        Spectrum {
            residuals: vec![0.0; eigs.len()],
            eigenvalues: eigs,
            meta: SpectrumMeta {
                tag: None,
                theta,
                eps: 0.0,
                n: 0,
                half_length: 0.0,
            },
        }
    }

    fn diag(d: &[Complex64]) -> Mat<Complex64> {
        Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { c(0.0, 0.0) })
    }

    #[test]
    fn window_membership() {
        let theta = c(0.0, 0.2);
        let a = a_of_theta(theta);
        let w = SectorWindow::full(theta, 100.0);
        w.validate(theta).unwrap();
        assert!(w.contains(c(3.5, -1.0), theta));
        assert!(w.contains(c(-3.0, -1.0), theta));
        assert!(!w.contains(Complex64::from_polar(2.0, -2.0 * a), theta));
        assert!(!w.contains(Complex64::from_polar(2.0, -2.0 * a - 0.01), theta));
        assert!(!w.contains(c(1e-9, 0.0), theta));
        let bad = SectorWindow {
            arg_min: -2.0 * a - 0.1,
            ..w
        };
        assert!(bad.validate(theta).is_err());
    }

    #[test]
    fn window_around_disk() {
        let z = c(3.5, -1.9);
        let w = SectorWindow::around(z, 0.2).unwrap();
        w.validate(c(0.0, 0.35)).unwrap();
        for k in 0..16 {
            let p = z + Complex64::from_polar(0.199, k as f64);
            assert!(w.contains(p, c(0.0, 0.35)));
        }
        assert!(SectorWindow::around(z, 10.0).is_err());
    }

    #[test]
    fn empty_window_gives_empty_spectrum() {
        let s = spectrum(vec![c(1.0, -0.1), c(2.0, -0.5)], c(0.0, 0.2));
        let w = SectorWindow {
            arg_min: 0.5,
            arg_max: 0.6,
            r_min: 10.0,
            r_max: 11.0,
            essential_margin: 0.0,
        };
        assert!(filter_sector(&s, &w).is_empty());
    }

    #[test]
    fn matching() {
        let theta = c(0.0, 0.1);
        let w = SectorWindow::full(theta, 50.0);
        let a = spectrum(vec![c(1.0, -0.1), c(2.0, -0.05), c(3.0, 0.0)], theta);
        let r = match_spectra(&a, &a, &w, 1e-3).unwrap();
        assert_eq!(r.max_distance, 0.0);
        assert_eq!(r.pairs.len(), 3);

        let b = spectrum(vec![c(1.0001, -0.1), c(2.0, -0.0501), c(3.0, 0.0)], theta);
        let r = match_spectra(&a, &b, &w, 1e-3).unwrap();
        assert!(r.max_distance < 2e-4);

        let far = spectrum(vec![c(5.0, -1.0), c(7.0, -0.2)], theta);
        assert!(matches!(match_spectra(&a, &far, &w, 1e-3), Err(Error::MatchFailure { .. })));
    }

    #[test]
    fn contour_checks() {
        assert!(ContourSpec::new(c(1.0, 0.0), 0.5, 31).is_err());
        let k = ContourSpec::new(c(3.5, -1.9), 0.3, 32).unwrap();
        k.check_ray_clearance(c(0.0, 0.35), ESSENTIAL_MARGIN_DEFAULT).unwrap();
        assert!(k.check_ray_clearance(c(0.0, 0.2), ESSENTIAL_MARGIN_DEFAULT).is_err());
        assert!(k.check_spectral_gap(&[c(3.5, -1.6)]).is_err());
        k.check_spectral_gap(&[c(3.5, -1.9)]).unwrap();
    }

    #[test]
    fn direct_multiplicity_simple_and_empty() {
        let a = diag(&[c(1.0, 0.0), c(2.0, -1.0), c(-1.0, 0.5)]);
        let one = ContourSpec::new(c(2.0, -1.0), 0.5, 32).unwrap();
        let m = multiplicity_direct(a.as_ref(), &one).unwrap();
        assert!((m - 1.0).norm() < 1e-6, "{m}");
        let none = ContourSpec::new(c(5.0, 5.0), 0.5, 32).unwrap();
        assert!(multiplicity_direct(a.as_ref(), &none).unwrap().norm() < 1e-8);
    }

    #[test]
    fn direct_multiplicity_counts_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let a = Mat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let eig = eig_matrix(a.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        // Radius picked so no eigenvalue sits near the circle.
        let center = c(0.5, 0.3);
        let mut radius = f64::NAN;
        'search: for r in (20..120).map(|k| k as f64 * 0.05) {
            for z in &eig {
                if (((z - center).norm() - r).abs()) < 0.1 * r {
                    continue 'search;
                }
            }
            radius = r;
            break;
        }
        let k = ContourSpec::new(center, radius, 256).unwrap();
        k.check_spectral_gap(&eig).unwrap();
        let m = multiplicity_direct(a.as_ref(), &k).unwrap();
        assert!((m - k.count_inside(&eig) as f64).norm() < 1e-3, "{m} vs {}", k.count_inside(&eig));
    }

    #[test]
    fn contour_deformation_invariance() {
        let a = diag(&[c(1.0, 0.0), c(1.05, -0.02), c(4.0, 0.0)]);
        let m1 = multiplicity_direct(a.as_ref(), &ContourSpec::new(c(1.0, 0.0), 0.5, 64).unwrap()).unwrap();
        let m2 = multiplicity_direct(a.as_ref(), &ContourSpec::new(c(1.0, 0.0), 1.0, 64).unwrap()).unwrap();
        assert!((m1 - m2).norm() < 1e-6);
        assert!((m1 - 2.0).norm() < 1e-6);
    }

    #[test]
    fn logderiv_matches_direct_on_synthetic_split() {
        // H = A + diag(v) with v supported on a few indices.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                c(3.0 + i as f64, -0.5)
            } else {
                c(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05))
            }
        });
        let mut v = vec![c(0.0, 0.0); n];
        v[1] = c(-3.0, 0.3);
        v[2] = c(-2.5, 0.0);
        let h = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { v[i] } else { c(0.0, 0.0) });
        let eig = eig_matrix(h.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        let aeig = eig_matrix(a.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        let k = ContourSpec::new(c(1.2, -0.3), 0.9, 64).unwrap();
        assert_eq!(k.count_inside(&aeig), 0);
        let r = multiplicity_report(h.as_ref(), a.as_ref(), &v, &k).unwrap();
        assert_eq!(r.rounded as usize, k.count_inside(&eig));
        assert!(r.passes(), "{r:?}");
        let empty = ContourSpec::new(c(30.0, 10.0), 0.5, 32).unwrap();
        let r = multiplicity_report(h.as_ref(), a.as_ref(), &v, &empty).unwrap();
        assert_eq!(r.rounded, 0);
        assert!(r.passes());
    }

    #[test]
    fn logderiv_with_empty_support_is_zero() {
        let a = diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        let k = ContourSpec::new(c(1.0, 0.0), 0.5, 16).unwrap();
        assert_eq!(multiplicity_logderiv(a.as_ref(), &[c(0.0, 0.0); 2], &k).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn power_iteration_on_normal_matrix() {
        let a = diag(&[c(1.0, 0.0), c(2.0, 1.0), c(-3.0, 0.0)]);
        let z = c(0.0, 1.0);
        let got = norm_probe(&ProbeTarget::Plain { a: a.as_ref() }, &[z]).unwrap()[0];
        let exact = [c(1.0, 0.0), c(2.0, 1.0), c(-3.0, 0.0)]
            .iter()
            .map(|l| 1.0 / (l - z).norm())
            .fold(0.0, f64::max);
        assert!((got / exact - 1.0).abs() < 1e-6);
    }
}
