//! Reference values computed without the matrix path: the Davies CAP
//! spectrum, outgoing-wave determinants for the square well and the
//! Pöschl-Teller barrier, their zeros, and a plain-text result cache.
//!
//! A resonance is `z = k²` where `k` (with `Im k < 0`) is a zero of the
//! reciprocal transmission amplitude `D(k)`: the solution is then purely
//! outgoing, `e^{-ikx}` to the left and `e^{ikx}` to the right.

mod cache;
pub mod gamma;
pub mod ode;
pub mod roots;

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigensolver::spectral_order;
use crate::potentials::PotentialKind;
use crate::{Error, Result, I};

pub use cache::{cache_key, OracleCache};
use gamma::{gamma, rgamma};
pub use roots::KRect;

/// Eigenvalues of `-d²/dx² - iεx²` on the line: `√ε e^{-iπ/4} (1 + 2k)`.
pub fn davies_spectrum(eps: f64, count: usize) -> Result<Vec<Complex64>> {
    if !(eps > 0.0) || count == 0 {
        return Err(Error::InvalidInput(format!("need eps > 0 and count >= 1 (eps = {eps}, count = {count})")));
    }
    let base = eps.sqrt() * Complex64::from_polar(1.0, -FRAC_PI_4);
    Ok((0..count).map(|k| base * (1 + 2 * k) as f64).collect())
}

/// `s` with `s(s+1) = -V0`, the Pöschl-Teller index.
fn pt_index(v0: f64) -> Complex64 {
    0.5 * (-1.0 + Complex64::new(1.0 - 4.0 * v0, 0.0).sqrt())
}

fn check(v: Complex64, k: Complex64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::EvaluationFailure(format!("determinant not finite at k = {k}")))
    }
}

/// Reciprocal transmission amplitude `D(k)`; resonances and bound states
/// are its zeros.
///
/// Square well (`V0` on `|x| < a`):
/// `e^{2ika} [cos 2qa + (k² + q²) sin(2qa) / (2ikq)]` with `q² = k² - V0`.
/// Pöschl-Teller (`V0 sech² x`):
/// `Γ(-ik) Γ(1-ik) / (Γ(-ik-s) Γ(-ik+s+1))`.
pub fn resonance_determinant(kind: &PotentialKind, k: Complex64) -> Result<Complex64> {
    if k.norm() == 0.0 {
        return Err(Error::InvalidInput("D(k) is undefined at k = 0".into()));
    }
    match *kind {
        PotentialKind::Free => Ok(Complex64::new(1.0, 0.0)),
        PotentialKind::SquareWell { v0, a } => {
            let q2 = k * k - v0;
            let q = q2.sqrt();
            let c = (2.0 * a * q).cos();
            // sin(2qa)/q, even in q and regular at q = 0.
            let s = if (q * a).norm() < 1e-4 {
                2.0 * a * (1.0 - (2.0 * a * q).powi(2) / 6.0)
            } else {
                (2.0 * a * q).sin() / q
            };
            check((2.0 * I * k * a).exp() * (c + (k * k + q2) * s / (2.0 * I * k)), k)
        }
        PotentialKind::PoschlTeller { v0 } => {
            let s = pt_index(v0);
            let w = -I * k;
            let poles = gamma(w) * gamma(w + 1.0);
            check(poles * rgamma(w - s) * rgamma(w + s + 1.0), k)
        }
        PotentialKind::GaussianBump { .. } => Err(Error::InvalidInput(
            "no closed-form determinant for the Gaussian bump".into(),
        )),
    }
}

/// Entire function with the same zeros as `D` away from the Gamma poles on
/// the negative imaginary axis. Root finding runs on this.
fn regular_determinant(kind: &PotentialKind, k: Complex64) -> Result<Complex64> {
    match *kind {
        PotentialKind::PoschlTeller { v0 } => {
            let s = pt_index(v0);
            let w = -I * k;
            check(rgamma(w - s) * rgamma(w + s + 1.0), k)
        }
        _ => resonance_determinant(kind, k),
    }
}

/// Determinant by direct integration: the left-end coefficient `α` of the
/// solution that equals `e^{ikx}` at the right end.
pub fn ode_determinant(kind: &PotentialKind, k: Complex64, steps: usize) -> Result<Complex64> {
    let (x_max, breaks): (f64, Vec<f64>) = match *kind {
        PotentialKind::SquareWell { a, .. } => (a + 1.0, vec![-a, a]),
        PotentialKind::PoschlTeller { .. } => (22.0, vec![]),
        PotentialKind::GaussianBump { sigma, .. } => (7.0 * sigma, vec![]),
        PotentialKind::Free => (1.0, vec![]),
    };
    let kind = *kind;
    let v = move |x: f64| match kind {
        PotentialKind::Free => 0.0,
        PotentialKind::SquareWell { v0, a } => {
            if x.abs() < a {
                v0
            } else {
                0.0
            }
        }
        PotentialKind::GaussianBump { v0, sigma } => v0 * (-(x / sigma).powi(2)).exp(),
        PotentialKind::PoschlTeller { v0 } => v0 / x.cosh().powi(2),
    };
    Ok(ode::outgoing_coefficients(&v, &breaks, k, x_max, steps)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    DeterminantRoots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `z = k²`, sorted by `(|z|, arg z)`; zeros of multiplicity `m` appear
    /// `m` times.
    pub values: Vec<Complex64>,
    /// Momenta aligned with `values`.
    pub k_values: Vec<Complex64>,
    pub method: OracleMethod,
    /// Digits of the least accurate entry.
    pub certified_digits: u32,
}

/// Zeros of `D` inside a rectangle of the `k`-plane, returned as energies.
pub fn find_resonances(kind: &PotentialKind, region: &KRect) -> Result<OracleResult> {
    if region.contains(Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidInput("region must exclude k = 0".into()));
    }
    let f = |k: Complex64| regular_determinant(kind, k);
    let roots = roots::find_zeros(&f, region)?;
    let mut digits = 15u32;
    let mut pairs = Vec::new();
    for (r, mult) in roots {
        let d = resonance_determinant(kind, r.k)?;
        if !(d.norm() < 1e-10) {
            return Err(Error::EvaluationFailure(format!("|D| = {:e} after polishing at k = {}", d.norm(), r.k)));
        }
        let rel = (r.last_step.max(f64::EPSILON * r.k.norm())) / r.k.norm();
        digits = digits.min((-rel.log10()).floor().clamp(0.0, 15.0) as u32);
        for _ in 0..mult {
            pairs.push((r.k * r.k, r.k));
        }
    }
    pairs.sort_by(|a, b| spectral_order(&a.0, &b.0).then(a.1.re.total_cmp(&b.1.re)));
    Ok(OracleResult {
        values: pairs.iter().map(|p| p.0).collect(),
        k_values: pairs.iter().map(|p| p.1).collect(),
        method: OracleMethod::DeterminantRoots,
        certified_digits: digits,
    })
}

/// Davies spectrum as an oracle record.
pub fn davies_result(eps: f64, count: usize) -> Result<OracleResult> {
    let values = davies_spectrum(eps, count)?;
    Ok(OracleResult {
        k_values: values.iter().map(|z| z.sqrt()).collect(),
        values,
        method: OracleMethod::ClosedForm,
        certified_digits: 15,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const PT4: PotentialKind = PotentialKind::PoschlTeller { v0: 4.0 };

    #[test]
    fn davies_values() {
        let d = davies_spectrum(0.04, 3).unwrap();
        assert!((d[0] - c(0.141421, -0.141421)).norm() < 1e-6);
        assert!((d[1] - c(0.424264, -0.424264)).norm() < 1e-6);
        let small = davies_spectrum(0.0004, 1).unwrap();
        assert!((small[0].norm() / d[0].norm() - 0.1).abs() < 1e-14);
        assert!(davies_spectrum(0.0, 1).is_err());
    }

    #[test]
    fn free_square_well_is_trivial() {
        let sw = PotentialKind::SquareWell { v0: 0.0, a: 1.0 };
        for k in [c(1.0, -0.3), c(-2.0, -1.0), c(0.1, 0.5)] {
            assert!((resonance_determinant(&sw, k).unwrap() - 1.0).norm() < 1e-14);
        }
        let r = find_resonances(&sw, &KRect::new(-4.0, 4.0, -3.0, -0.05).unwrap()).unwrap();
        assert!(r.values.is_empty());
    }

    /// Even and odd bound states of a finite well by shooting from the
    /// centre with a real energy and bisecting the exterior mismatch.
    fn shooting_bound_states(v0: f64, a: f64) -> Vec<f64> {
        let mismatch = |e: f64, even: bool| {
            let kappa = (-e).sqrt();
            let (mut y, mut dy) = if even { (1.0, 0.0) } else { (0.0, 1.0) };
            let n = 4000;
            let h = a / n as f64;
            let f = |y: f64| (v0 - e) * y;
            for _ in 0..n {
                let (k1y, k1d) = (dy, f(y));
                let (k2y, k2d) = (dy + 0.5 * h * k1d, f(y + 0.5 * h * k1y));
                let (k3y, k3d) = (dy + 0.5 * h * k2d, f(y + 0.5 * h * k2y));
                let (k4y, k4d) = (dy + h * k3d, f(y + h * k3y));
                y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
                dy += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            }
            dy + kappa * y
        };
        let mut out = Vec::new();
        for even in [true, false] {
            let m = 2000;
            let es: Vec<f64> = (1..m).map(|i| v0 + (-v0) * i as f64 / m as f64).collect();
            for w in es.windows(2) {
                let (mut lo, mut hi) = (w[0], w[1]);
                if mismatch(lo, even).signum() == mismatch(hi, even).signum() {
                    continue;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mismatch(mid, even).signum() == mismatch(lo, even).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn square_well_bound_states_match_shooting() {
        let (v0, a) = (-12.0, 1.0);
        let well = PotentialKind::SquareWell { v0, a };
        let shot = shooting_bound_states(v0, a);
        assert_eq!(shot.len(), 3);
        let region = KRect::new(-0.5, 0.5, 0.05, 3.3).unwrap();
        let r = find_resonances(&well, &region).unwrap();
        let mut energies: Vec<f64> = r.values.iter().map(|z| z.re).collect();
        energies.sort_by(f64::total_cmp);
        assert_eq!(energies.len(), 3);
        for (e, s) in energies.iter().zip(&shot) {
            assert!((e - s).abs() < 1e-9, "{e} vs {s}");
        }
        for z in &r.values {
            assert!(z.im.abs() < 1e-10);
        }
    }

    #[test]
    fn square_well_matches_integration() {
        let well = PotentialKind::SquareWell { v0: 3.0, a: 1.5 };
        for k in [c(1.2, -0.4), c(0.3, -0.9), c(2.5, 0.1)] {
            let d = resonance_determinant(&well, k).unwrap();
            let o = ode_determinant(&well, k, 20_000).unwrap();
            assert!((d - o).norm() < 1e-9 * d.norm().max(1.0), "{d} vs {o}");
        }
    }

    #[test]
    fn poschl_teller_unitarity_against_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let k = c(rng.gen_range(0.2..4.0), 0.0);
            let d = resonance_determinant(&PT4, k).unwrap();
            let alpha = ode_determinant(&PT4, k, 40_000).unwrap();
            let t = 1.0 / alpha;
            assert!((d * t - 1.0).norm() < 1e-8, "k = {k}: D t = {}", d * t);
        }
    }

    #[test]
    fn poschl_teller_roots_match_closed_form_and_pair_up() {
        let region = KRect::new(-4.0, 4.0, -2.9, -0.1).unwrap();
        let r = find_resonances(&PT4, &region).unwrap();
        // ±√(V0 - 1/4) - i(n + 1/2), n = 0, 1, 2
        let re = 3.75f64.sqrt();
        let mut expected = Vec::new();
        for n in 0..3 {
            for sgn in [1.0, -1.0] {
                expected.push(c(sgn * re, -(n as f64 + 0.5)));
            }
        }
        assert_eq!(r.k_values.len(), expected.len());
        for e in &expected {
            assert!(r.k_values.iter().any(|k| (k - e).norm() < 1e-10), "missing {e}");
        }
        for k in &r.k_values {
            let mirror = -k.conj();
            assert!(r.k_values.iter().any(|q| (q - mirror).norm() < 1e-9));
            assert!(resonance_determinant(&PT4, *k).unwrap().norm() < 1e-10);
        }
        assert!(r.certified_digits >= 10);
        assert_eq!(r.method, OracleMethod::DeterminantRoots);
    }

    /// Minima of |D| found by grid sampling and pattern search, without the
    /// argument principle or Newton.
    #[test]
    fn poschl_teller_roots_match_dense_sampling() {
        let f = |k: Complex64| regular_determinant(&PT4, k).unwrap().norm();
        let (nx, ny) = (161, 57);
        let grid = |i: usize, j: usize| c(-4.0 + 8.0 * i as f64 / (nx - 1) as f64, -2.9 + 2.8 * j as f64 / (ny - 1) as f64);
        let mut minima = Vec::new();
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let v = f(grid(i, j));
                let is_min = (-1i32..=1).all(|di| {
                    (-1i32..=1).all(|dj| (di == 0 && dj == 0) || f(grid((i as i32 + di) as usize, (j as i32 + dj) as usize)) > v)
                });
                if is_min {
                    minima.push(grid(i, j));
                }
            }
        }
        let roots = find_resonances(&PT4, &KRect::new(-4.0, 4.0, -2.9, -0.1).unwrap()).unwrap();
        assert_eq!(minima.len(), roots.k_values.len());
        for m in minima {
            let mut p = m;
            let mut step = 0.05;
            while step > 1e-12 {
                let cands = [p + step, p - step, p + I * step, p - I * step];
                match cands.iter().copied().min_by(|a, b| f(*a).total_cmp(&f(*b))) {
                    Some(q) if f(q) < f(p) => p = q,
                    _ => step *= 0.5,
                }
            }
            assert!(roots.k_values.iter().any(|k| (k - p).norm() < 1e-7), "sampled minimum {p} not in root list");
        }
    }

    #[test]
    fn poschl_teller_gamma_poles_are_flagged() {
        assert!(resonance_determinant(&PT4, c(0.0, -1.0)).is_err());
        assert!(resonance_determinant(&PT4, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn region_must_exclude_origin() {
        assert!(find_resonances(&PT4, &KRect::new(-1.0, 1.0, -1.0, 1.0).unwrap()).is_err());
    }
}
