//! Exterior spectral deformation `φ_θ(x) = x + θ h(|x|) x`.
//!
//! The cutoff `h` vanishes for `t < 2R`, equals one for `t > 8R` and must
//! satisfy `sup_t h(t) + t h'(t) ≤ 3/2`. Since `∫_{2R}^{8R} (t h)' dt = 8R`,
//! the average of `g = (t h)'` over the transition is already `4/3`, so the
//! cutoff is built from `g` itself: a smooth ramp from 0 up to a plateau `A`,
//! then a smooth ramp down to 1 ending at `8R`, with `A` fixed by the
//! normalization. Then `h = (1/t) ∫ g`, `h' = (g - h)/t` and `φ' = 1 + θ g`.
//! Wide ramps keep the derivatives of `φ'` small, which matters for the
//! finite-difference error constant.

use std::f64::consts::FRAC_PI_8;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, GeometryClause, Result};

/// Upper bound on `h + t h'` required of the cutoff.
pub const CUTOFF_SLOPE_BOUND: f64 = 1.5;

/// Number of cells of the construction grid of a [`SmoothStep`].
pub const STEP_TABLE_CELLS: usize = 10_000;

/// Shape of the asymmetric bump `exp(-rise/w - fall/(1-w) - skew·w)` on the
/// normalized transition variable `w ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpShape {
    pub rise: f64,
    pub fall: f64,
    pub skew: f64,
}

impl BumpShape {
    /// Symmetric bump without skew, used by both cutoffs.
    pub const SYMMETRIC: BumpShape = BumpShape {
        rise: 1.0,
        fall: 1.0,
        skew: 0.0,
    };

    fn validate(&self) -> Result<()> {
        if !(self.rise > 0.0 && self.fall > 0.0 && self.skew.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bump shape needs rise > 0, fall > 0 and finite skew, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Unnormalized bump and its derivative at `w`.
    fn eval(&self, w: f64) -> (f64, f64) {
        if w <= 0.0 || w >= 1.0 {
            return (0.0, 0.0);
        }
        let exponent = -self.rise / w - self.fall / (1.0 - w) - self.skew * w;
        let b = exponent.exp();
        let db = b * (self.rise / (w * w) - self.fall / ((1.0 - w) * (1.0 - w)) - self.skew);
        (b, db)
    }
}

/// Smooth monotone step `S: [0, 1] → [0, 1]`, the normalized integral of a
/// [`BumpShape`]. Flat to all orders at both ends.
#[derive(Debug, Clone)]
pub struct SmoothStep {
    shape: BumpShape,
    cells: usize,
    value: Vec<f64>,
    slope: Vec<f64>,
    curvature: Vec<f64>,
    // Hermite slopes for `value` after the Fritsch-Carlson limiter.
    limited_slope: Vec<f64>,
    // `∫_0^{w_k} S` of the Hermite interpolant.
    area: Vec<f64>,
}

impl SmoothStep {
    pub fn new(shape: BumpShape, cells: usize) -> Result<Self> {
        shape.validate()?;
        if cells < 16 {
            return Err(Error::InvalidInput(format!(
                "smooth step needs at least 16 cells, got {cells}"
            )));
        }
        let dw = 1.0 / cells as f64;
        // 8-point Gauss-Legendre per cell.
        const GL_X: [f64; 8] = [
            -0.960_289_856_497_536_3,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const GL_W: [f64; 8] = [
            0.101_228_536_290_376_26,
            0.222_381_034_453_374_47,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362,
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_47,
            0.101_228_536_290_376_26,
        ];
        let mut value = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        value.push(0.0);
        for k in 0..cells {
            let mid = (k as f64 + 0.5) * dw;
            let cell: f64 = GL_X
                .iter()
                .zip(GL_W.iter())
                .map(|(&x, &w)| w * shape.eval(mid + 0.5 * dw * x).0)
                .sum();
            acc += 0.5 * dw * cell;
            value.push(acc);
        }
        let total = acc;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ConstraintViolation(format!(
                "bump {shape:?} has no resolvable mass"
            )));
        }
        let mut slope = Vec::with_capacity(cells + 1);
        let mut curvature = Vec::with_capacity(cells + 1);
        for (k, v) in value.iter_mut().enumerate() {
            *v /= total;
            let (b, db) = shape.eval(k as f64 * dw);
            slope.push(b / total);
            curvature.push(db / total);
        }
        let last = value.len() - 1;
        value[last] = 1.0;

        let mut limited_slope = slope.clone();
        for k in 0..cells {
            let secant = (value[k + 1] - value[k]) / dw;
            if secant <= 0.0 {
                limited_slope[k] = 0.0;
                limited_slope[k + 1] = 0.0;
                continue;
            }
            let alpha = limited_slope[k] / secant;
            let beta = limited_slope[k + 1] / secant;
            let norm = alpha * alpha + beta * beta;
            if norm > 9.0 {
                let tau = 3.0 / norm.sqrt();
                limited_slope[k] = tau * alpha * secant;
                limited_slope[k + 1] = tau * beta * secant;
            }
        }

        let mut area = Vec::with_capacity(cells + 1);
        area.push(0.0);
        for k in 0..cells {
            let cell = 0.5 * dw * (value[k] + value[k + 1])
                + dw * dw * (limited_slope[k] - limited_slope[k + 1]) / 12.0;
            area.push(area[k] + cell);
        }

        Ok(SmoothStep {
            shape,
            cells,
            value,
            slope,
            curvature,
            limited_slope,
            area,
        })
    }

    pub fn shape(&self) -> BumpShape {
        self.shape
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Node values `(w_k, S(w_k), S'(w_k))` of the construction grid.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let dw = 1.0 / self.cells as f64;
        (0..=self.cells).map(move |k| (k as f64 * dw, self.value[k], self.slope[k]))
    }

    /// `(S(w), S'(w))` by cubic Hermite interpolation; the value uses
    /// monotonicity-limited slopes, the derivative uses exact curvatures.
    pub fn eval(&self, w: f64) -> (f64, f64) {
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        if w >= 1.0 {
            return (1.0, 0.0);
        }
        let dw = 1.0 / self.cells as f64;
        let pos = w / dw;
        let k = (pos.floor() as usize).min(self.cells - 1);
        let s = pos - k as f64;
        let (h00, h10, h01, h11) = hermite_basis(s);
        let value = h00 * self.value[k]
            + h10 * dw * self.limited_slope[k]
            + h01 * self.value[k + 1]
            + h11 * dw * self.limited_slope[k + 1];
        let slope = h00 * self.slope[k]
            + h10 * dw * self.curvature[k]
            + h01 * self.slope[k + 1]
            + h11 * dw * self.curvature[k + 1];
        (value.clamp(0.0, 1.0), slope.max(0.0))
    }

    /// `∫_0^w S`, consistent with the interpolant used by [`eval`](Self::eval).
    pub fn integral(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let total = self.area[self.cells];
        if w >= 1.0 {
            return total + (w - 1.0);
        }
        let dw = 1.0 / self.cells as f64;
        let pos = w / dw;
        let k = (pos.floor() as usize).min(self.cells - 1);
        let s = pos - k as f64;
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        let i00 = s - s3 + 0.5 * s4;
        let i10 = 0.5 * s2 - 2.0 * s3 / 3.0 + 0.25 * s4;
        let i01 = s3 - 0.5 * s4;
        let i11 = 0.25 * s4 - s3 / 3.0;
        self.area[k]
            + dw * (i00 * self.value[k]
                + i10 * dw * self.limited_slope[k]
                + i01 * self.value[k + 1]
                + i11 * dw * self.limited_slope[k + 1])
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Widths, in units of `R`, of the two ramps of `g = (t h)'`: up from 0
/// at `2R`, and down to 1 at `8R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffShape {
    pub rise_width: f64,
    pub fall_width: f64,
}

impl Default for CutoffShape {
    fn default() -> Self {
        CutoffShape {
            rise_width: 0.7,
            fall_width: 1.0,
        }
    }
}

/// Tabulated cutoff `h` and `h'` for one exterior radius.
#[derive(Debug, Clone)]
pub struct CutoffTable {
    r: f64,
    shape: CutoffShape,
    step: SmoothStep,
    plateau: f64,
    /// Sample points `t` (sorted, spanning `[2R, 8R]`).
    pub nodes: Vec<f64>,
    /// `h` at the sample points.
    pub h: Vec<f64>,
    /// `h'` at the sample points.
    pub hprime: Vec<f64>,
    sup_slope: f64,
}

impl CutoffTable {
    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn shape(&self) -> CutoffShape {
        self.shape
    }

    /// Plateau value `A` of `h + t h'`.
    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    /// `max_k h(t_k) + t_k h'(t_k)` over the sample nodes.
    pub fn sup_slope(&self) -> f64 {
        self.sup_slope
    }

    /// `g(t) = h(t) + t h'(t)` for `t ≥ 0`.
    fn slope_sum(&self, t: f64) -> f64 {
        let (r, a) = (self.r, self.plateau);
        let (d1, d2) = (self.shape.rise_width * r, self.shape.fall_width * r);
        if t <= 2.0 * r {
            return 0.0;
        }
        if t >= 8.0 * r {
            return 1.0;
        }
        a * self.step.eval((t - 2.0 * r) / d1).0 - (a - 1.0) * self.step.eval((t - 8.0 * r + d2) / d2).0
    }

    /// `(h(t), h'(t))` for `t ≥ 0`; negative `t` are reflected.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let t = t.abs();
        let (r, a) = (self.r, self.plateau);
        if t <= 2.0 * r {
            return (0.0, 0.0);
        }
        if t >= 8.0 * r {
            return (1.0, 0.0);
        }
        let (d1, d2) = (self.shape.rise_width * r, self.shape.fall_width * r);
        let mass = a * d1 * self.step.integral((t - 2.0 * r) / d1)
            - (a - 1.0) * d2 * self.step.integral((t - 8.0 * r + d2) / d2);
        let h = (mass / t).clamp(0.0, 1.0);
        let g = self.slope_sum(t);
        (h, ((g - h) / t).max(0.0))
    }
}

/// Builds the cutoff for `R` and checks `sup h + t h' ≤ 3/2`.
pub fn build_cutoff(r: f64, shape: CutoffShape) -> Result<CutoffTable> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("R must be positive, got {r}")));
    }
    let (d1, d2) = (shape.rise_width, shape.fall_width);
    if !(d1 > 0.0 && d2 > 0.0 && d1 + d2 <= 6.0) {
        return Err(Error::InvalidInput(format!(
            "cutoff ramp widths must be positive with sum at most 6, got {shape:?}"
        )));
    }
    let step = SmoothStep::new(BumpShape::SYMMETRIC, STEP_TABLE_CELLS)?;
    // ∫_{2R}^{8R} g = 8R with c = ∫_0^1 S.
    let c = step.integral(1.0);
    let plateau = (8.0 - d2 * c) / (6.0 - d1 * (1.0 - c) - d2 * c);
    let mut table = CutoffTable {
        r,
        shape,
        step,
        plateau,
        nodes: Vec::new(),
        h: Vec::new(),
        hprime: Vec::new(),
        sup_slope: 0.0,
    };
    if plateau > CUTOFF_SLOPE_BOUND {
        return Err(Error::ConstraintViolation(format!(
            "cutoff shape {shape:?} gives sup(h + t h') = {plateau:.6} > 3/2"
        )));
    }
    let cells = STEP_TABLE_CELLS;
    let mut sup = 0.0f64;
    for k in 0..=cells {
        let t = 2.0 * r + 6.0 * r * k as f64 / cells as f64;
        let (h, hp) = table.eval(t);
        sup = sup.max(h + t * hp);
        table.nodes.push(t);
        table.h.push(h);
        table.hprime.push(hp);
    }
    table.sup_slope = sup;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeformationMode {
    /// Identity inside `2R`, full dilation outside `8R`.
    Exterior,
    /// `h ≡ 1`: plain global dilation. Test harness only; the operator is
    /// exactly similar to `(1+θ)^{-2} p² + V((1+θ)x)`.
    GlobalDilation,
}

/// `a(θ) = arg(1 + θ)`, the rotation angle of the outer contour.
pub fn a_of_theta(theta: Complex64) -> f64 {
    (Complex64::new(1.0, 0.0) + theta).arg()
}

/// Exterior radius, cone aperture and deformation parameter.
#[derive(Debug, Clone)]
pub struct DeformationProfile {
    r: f64,
    beta0: f64,
    theta: Complex64,
    mode: DeformationMode,
    cutoff: Arc<CutoffTable>,
}

impl DeformationProfile {
    pub fn new(
        r: f64,
        beta0: f64,
        theta: Complex64,
        shape: CutoffShape,
        mode: DeformationMode,
    ) -> Result<Self> {
        if !(beta0 > 0.0 && beta0 <= FRAC_PI_8 * (1.0 + 1e-12)) {
            return Err(Error::ConstraintViolation(format!(
                "beta0 = {beta0} must satisfy 0 < beta0 <= pi/8"
            )));
        }
        check_theta(theta, beta0)?;
        let cutoff = build_cutoff(r, shape)?;
        Ok(DeformationProfile {
            r,
            beta0,
            theta,
            mode,
            cutoff: Arc::new(cutoff),
        })
    }

    /// Exterior profile with the default cutoff shape.
    pub fn exterior(r: f64, beta0: f64, theta: Complex64) -> Result<Self> {
        Self::new(r, beta0, theta, CutoffShape::default(), DeformationMode::Exterior)
    }

    /// Same cutoff and cone, different `θ`.
    pub fn with_theta(&self, theta: Complex64) -> Result<Self> {
        check_theta(theta, self.beta0)?;
        Ok(DeformationProfile {
            theta,
            ..self.clone()
        })
    }

    pub fn with_mode(&self, mode: DeformationMode) -> Self {
        DeformationProfile {
            mode,
            ..self.clone()
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn theta(&self) -> Complex64 {
        self.theta
    }

    pub fn mode(&self) -> DeformationMode {
        self.mode
    }

    pub fn cutoff(&self) -> &CutoffTable {
        &self.cutoff
    }

    pub fn a_of_theta(&self) -> f64 {
        a_of_theta(self.theta)
    }

    /// `(h(|x|), h'(|x|))` in the active mode.
    fn cutoff_at(&self, x: f64) -> (f64, f64) {
        match self.mode {
            DeformationMode::Exterior => self.cutoff.eval(x),
            DeformationMode::GlobalDilation => (1.0, 0.0),
        }
    }

    /// `φ_θ(x)` and `φ_θ'(x) = 1 + θ (h(|x|) + |x| h'(|x|))`.
    pub fn phi(&self, x: f64) -> (Complex64, Complex64) {
        let (h, hp) = self.cutoff_at(x);
        let phi = x + self.theta * (h * x);
        let dphi = 1.0 + self.theta * (h + x.abs() * hp);
        (phi, dphi)
    }

    /// `J_θ(x)`; in one dimension this is `φ_θ'(x)`.
    pub fn jacobian(&self, x: f64) -> Complex64 {
        self.phi(x).1
    }

    /// Checks the contour `Γ = φ_θ(ℝ)` on the given samples.
    pub fn validate_geometry(&self, samples: &[f64]) -> Result<GeometryReport> {
        let a = self.a_of_theta();
        let tan_beta = self.beta0.tan();
        let mut report = GeometryReport {
            samples: samples.len(),
            identity_max_deviation: 0.0,
            ray_max_deviation: 0.0,
            aperture_min_margin: f64::INFINITY,
            truncation_min_margin: f64::INFINITY,
        };
        for &x in samples {
            let (phi, _) = self.phi(x);
            let ax = x.abs();
            if ax < 2.0 * self.r {
                let dev = (phi - x).norm();
                report.identity_max_deviation = report.identity_max_deviation.max(dev);
                if dev > 1e-14 * ax.max(1.0) {
                    return Err(Error::GeometryViolation {
                        clause: GeometryClause::IdentityCore,
                        x,
                        detail: format!("phi(x) - x = {}", phi - x),
                    });
                }
            }
            if ax > 8.0 * self.r {
                let dev = ((phi / x).arg() - a).abs();
                report.ray_max_deviation = report.ray_max_deviation.max(dev);
                if dev > 1e-12 {
                    return Err(Error::GeometryViolation {
                        clause: GeometryClause::OuterRay,
                        x,
                        detail: format!("arg(phi/x) deviates from a(theta) by {dev:e}"),
                    });
                }
            }
            if phi.im != 0.0 {
                let margin = tan_beta - phi.im.abs() / phi.re.abs();
                report.aperture_min_margin = report.aperture_min_margin.min(margin);
                if !(margin > 0.0) {
                    return Err(Error::GeometryViolation {
                        clause: GeometryClause::ConeAperture,
                        x,
                        detail: format!("phi = {phi} leaves the cone of aperture {}", self.beta0),
                    });
                }
            }
            if ax >= 2.0 * self.r {
                let margin = phi.re.abs() - self.r;
                report.truncation_min_margin = report.truncation_min_margin.min(margin);
                if !(margin > 0.0) {
                    return Err(Error::GeometryViolation {
                        clause: GeometryClause::ConeTruncation,
                        x,
                        detail: format!("|Re phi| = {} <= R", phi.re.abs()),
                    });
                }
            }
        }
        Ok(report)
    }
}

fn check_theta(theta: Complex64, beta0: f64) -> Result<()> {
    let l1 = theta.re.abs() + theta.im.abs();
    if !(l1 < beta0.tan()) {
        return Err(Error::ConstraintViolation(format!(
            "theta = {theta} is outside D_beta0: |Re| + |Im| = {l1} >= tan(beta0) = {}",
            beta0.tan()
        )));
    }
    Ok(())
}

/// Outcome of [`DeformationProfile::validate_geometry`].
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub samples: usize,
    pub identity_max_deviation: f64,
    pub ray_max_deviation: f64,
    /// `min (tan β₀ - |Im φ| / |Re φ|)` over samples with `Im φ ≠ 0`.
    pub aperture_min_margin: f64,
    /// `min (|Re φ| - R)` over samples with `|x| ≥ 2R`.
    pub truncation_min_margin: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(theta: Complex64) -> DeformationProfile {
        DeformationProfile::exterior(1.0, FRAC_PI_8, theta).unwrap()
    }

    #[test]
    fn cutoff_flat_regions() {
        let p = profile(Complex64::new(0.0, 0.2));
        let r = p.r();
        assert_eq!(p.cutoff().eval(r), (0.0, 0.0));
        assert_eq!(p.cutoff().eval(9.0 * r), (1.0, 0.0));
        assert_eq!(p.cutoff().eval(-9.0 * r), (1.0, 0.0));
    }

    #[test]
    fn cutoff_sup_on_dense_grid() {
        let p = profile(Complex64::new(0.0, 0.2));
        let r = p.r();
        let n = 100_000;
        let mut sup = 0.0f64;
        let mut prev = 0.0;
        for k in 0..=n {
            let t = 2.0 * r + 6.0 * r * k as f64 / n as f64;
            let (h, hp) = p.cutoff().eval(t);
            assert!(h >= prev - 1e-15, "h decreasing at t = {t}");
            assert!(hp >= 0.0);
            prev = h;
            sup = sup.max(h + t * hp);
        }
        assert!(sup > 4.0 / 3.0 && sup <= 1.49, "sup = {sup}");
        assert!((sup - p.cutoff().plateau()).abs() < 1e-9);
    }

    #[test]
    fn bad_shape_rejected() {
        let shape = CutoffShape {
            rise_width: 1.5,
            fall_width: 1.5,
        };
        let err = build_cutoff(1.0, shape).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)), "{err}");
        let shape = CutoffShape {
            rise_width: 4.0,
            fall_width: 2.5,
        };
        let err = build_cutoff(1.0, shape).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
        let shape = CutoffShape {
            rise_width: 0.5,
            fall_width: 0.0,
        };
        let err = build_cutoff(1.0, shape).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn phi_examples() {
        let theta = Complex64::new(0.1, 0.15);
        let p = profile(theta);
        let r = p.r();
        assert_eq!(p.phi(r), (Complex64::new(r, 0.0), Complex64::new(1.0, 0.0)));
        let (phi, dphi) = p.phi(10.0 * r);
        let scale = 1.0 + theta;
        assert!((phi - scale * 10.0 * r).norm() < 1e-14);
        assert!((dphi - scale).norm() < 1e-15);
        let p0 = profile(Complex64::new(0.0, 0.0));
        for x in [-30.0, -3.3, 0.0, 4.1, 7.9, 50.0] {
            assert_eq!(p0.phi(x), (Complex64::new(x, 0.0), Complex64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn jacobian_outer_value_and_lower_bound() {
        let theta = Complex64::new(0.0, 0.2);
        let p = profile(theta);
        assert!((p.jacobian(20.0) - (1.0 + theta)).norm() < 1e-15);
        let min = (0..=20_000)
            .map(|k| p.jacobian(-12.0 + 24.0 * k as f64 / 20_000.0).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.7, "min |J| = {min}");
    }

    #[test]
    fn a_of_theta_values() {
        assert_eq!(a_of_theta(Complex64::new(0.0, 0.0)), 0.0);
        assert!((a_of_theta(Complex64::new(0.0, 0.2)) - 0.197_396).abs() < 1e-6);
        assert!((a_of_theta(Complex64::new(0.1, 0.15)) - 0.135_528).abs() < 1e-6);
        let t = Complex64::new(0.07, -0.21);
        assert_eq!(a_of_theta(t.conj()), -a_of_theta(t));
    }

    #[test]
    fn profile_constraints() {
        let quarter = std::f64::consts::FRAC_PI_4;
        assert!(matches!(
            DeformationProfile::exterior(1.0, quarter, Complex64::new(0.0, 0.1)),
            Err(Error::ConstraintViolation(_))
        ));
        let tb = FRAC_PI_8.tan();
        assert!(DeformationProfile::exterior(1.0, FRAC_PI_8, Complex64::new(0.5 * tb, 0.5 * tb)).is_err());
        assert!(DeformationProfile::exterior(1.0, FRAC_PI_8, Complex64::new(0.49 * tb, 0.5 * tb)).is_ok());
        assert!(DeformationProfile::exterior(-1.0, FRAC_PI_8, Complex64::new(0.0, 0.1)).is_err());
    }

    #[test]
    fn geometry_examples() {
        let p = profile(Complex64::new(0.0, 0.2));
        let a = p.a_of_theta();
        let (phi, _) = p.phi(20.0);
        assert!((phi.arg() - a).abs() < 1e-12);

        let xs: Vec<f64> = (0..10_000).map(|k| -40.0 + 80.0 * k as f64 / 9_999.0).collect();
        let real = profile(Complex64::new(0.3, 0.0));
        let rep = real.validate_geometry(&xs).unwrap();
        assert!(rep.aperture_min_margin.is_infinite());
        for &x in &xs {
            assert_eq!(real.phi(x).0.im, 0.0);
        }

        let edge = profile(Complex64::new(0.1, 0.29));
        let rep = edge.validate_geometry(&xs).unwrap();
        assert!(rep.aperture_min_margin > 0.0);
        assert!(rep.truncation_min_margin > 0.0);
    }

    #[test]
    fn global_dilation_breaks_identity_core() {
        let p = profile(Complex64::new(0.0, 0.2)).with_mode(DeformationMode::GlobalDilation);
        let err = p.validate_geometry(&[0.5]).unwrap_err();
        assert!(matches!(
            err,
            Error::GeometryViolation {
                clause: GeometryClause::IdentityCore,
                ..
            }
        ));
    }

    #[test]
    fn interpolation_matches_refined_table() {
        // Halving the construction spacing moves off-node values by far less
        // than the slope bound margin.
        let coarse = SmoothStep::new(BumpShape::SYMMETRIC, STEP_TABLE_CELLS).unwrap();
        let fine = SmoothStep::new(BumpShape::SYMMETRIC, 2 * STEP_TABLE_CELLS).unwrap();
        let mut worst = 0.0f64;
        for k in 0..9_973 {
            let w = (k as f64 + 0.37) / 9_973.0;
            let (a, da) = coarse.eval(w);
            let (b, db) = fine.eval(w);
            worst = worst.max((a - b).abs()).max((da - db).abs() / 10.0);
            worst = worst.max((coarse.integral(w) - fine.integral(w)).abs());
        }
        assert!(worst < 1e-6, "worst = {worst:e}");
        assert!((coarse.integral(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn h_is_the_mean_of_the_slope_sum() {
        // t h(t) = ∫_{2R}^t (h + s h') ds, checked by Simpson on a fine grid.
        let table = build_cutoff(1.5, CutoffShape::default()).unwrap();
        let (a, b) = (3.0, 12.0);
        let n = 20_000;
        let dt = (b - a) / n as f64;
        let g = |t: f64| {
            let (h, hp) = table.eval(t);
            h + t * hp
        };
        let mut acc = 0.0;
        for k in 0..n {
            let t0 = a + k as f64 * dt;
            acc += dt / 6.0 * (g(t0) + 4.0 * g(t0 + 0.5 * dt) + g(t0 + dt));
            let t1 = t0 + dt;
            if k % 997 == 0 || k == n - 1 {
                assert!((acc - t1 * table.eval(t1).0).abs() < 1e-9, "t = {t1}");
            }
        }
        assert!((acc - b).abs() < 1e-9);
    }
}
