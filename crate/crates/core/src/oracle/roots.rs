//! Zeros of analytic functions in rectangles: argument-principle census,
//! recursive isolation and Newton polish.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type AnalyticFn<'a> = dyn Fn(Complex64) -> Result<Complex64> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl KRect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max && im_min < im_max) || ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(KRect {
            re_min,
            re_max,
            im_min,
            im_max,
        })
    }

    pub fn contains(&self, k: Complex64) -> bool {
        k.re >= self.re_min && k.re <= self.re_max && k.im >= self.im_min && k.im <= self.im_max
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    fn diameter(&self) -> f64 {
        (self.re_max - self.re_min).hypot(self.im_max - self.im_min)
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    /// Four quadrants split at a point offset from the center, so that a
    /// symmetric zero set does not land on the cut lines.
    fn split(&self, skew: f64) -> [KRect; 4] {
        let xm = self.re_min + (0.5 + skew) * (self.re_max - self.re_min);
        let ym = self.im_min + (0.5 - 0.7 * skew) * (self.im_max - self.im_min);
        [
            KRect { re_max: xm, im_max: ym, ..*self },
            KRect { re_min: xm, im_max: ym, ..*self },
            KRect { re_min: xm, im_min: ym, ..*self },
            KRect { re_max: xm, im_min: ym, ..*self },
        ]
    }
}

const MAX_PHASE_STEP: f64 = PI / 4.0;
const MAX_EDGE_DEPTH: u32 = 40;

fn eval_nonzero(f: &AnalyticFn, k: Complex64) -> Result<Complex64> {
    let v = f(k)?;
    if !(v.norm() > 0.0) || !v.norm().is_finite() {
        return Err(Error::CountUnstable(format!("function vanishes or overflows on the contour at k = {k}")));
    }
    Ok(v)
}

fn segment_phase(f: &AnalyticFn, a: Complex64, b: Complex64, fa: Complex64, fb: Complex64, depth: u32) -> Result<f64> {
    let d = (fb / fa).arg();
    if d.abs() < MAX_PHASE_STEP {
        return Ok(d);
    }
    if depth >= MAX_EDGE_DEPTH {
        return Err(Error::CountUnstable(format!("phase not resolved near k = {a}")));
    }
    let m = 0.5 * (a + b);
    let fm = eval_nonzero(f, m)?;
    Ok(segment_phase(f, a, m, fa, fm, depth + 1)? + segment_phase(f, m, b, fm, fb, depth + 1)?)
}

fn winding_with(f: &AnalyticFn, rect: &KRect, per_edge: usize) -> Result<f64> {
    let c = rect.corners();
    let mut total = 0.0;
    let mut prev_k = c[0];
    let mut prev_f = eval_nonzero(f, prev_k)?;
    for e in 0..4 {
        let (a, b) = (c[e], c[(e + 1) % 4]);
        for s in 1..=per_edge {
            let k = a + (b - a) * (s as f64 / per_edge as f64);
            let fk = eval_nonzero(f, k)?;
            total += segment_phase(f, prev_k, k, prev_f, fk, 0)?;
            prev_k = k;
            prev_f = fk;
        }
    }
    Ok(total / (2.0 * PI))
}

/// Number of zeros of `f` inside `rect` by the argument principle. The
/// boundary phase is tracked adaptively at two starting resolutions; the
/// count is accepted only when both agree and sit within 0.05 of an integer.
pub fn zero_count(f: &AnalyticFn, rect: &KRect) -> Result<usize> {
    let coarse = winding_with(f, rect, 48)?;
    let fine = winding_with(f, rect, 131)?;
    let n = fine.round();
    if (coarse - fine).abs() > 0.05 || (fine - n).abs() > 0.05 || n < 0.0 {
        return Err(Error::CountUnstable(format!(
            "winding numbers {coarse:.4} and {fine:.4} do not settle on a nonnegative integer"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolishedRoot {
    pub k: Complex64,
    pub last_step: f64,
    pub residual: f64,
}

/// Newton iteration with a centered-difference derivative.
pub fn newton_polish(f: &AnalyticFn, k0: Complex64) -> Result<PolishedRoot> {
    let mut k = k0;
    let mut last_step = f64::INFINITY;
    for _ in 0..60 {
        let fk = f(k)?;
        if fk.norm() == 0.0 {
            last_step = 0.0;
            break;
        }
        let h = 1e-6 * k.norm().max(1.0);
        let df = (f(k + h)? - f(k - h)?) / (2.0 * h);
        if !(df.norm() > 0.0) {
            return Err(Error::EvaluationFailure(format!("flat derivative at k = {k}")));
        }
        let step = fk / df;
        k -= step;
        last_step = step.norm();
        if last_step <= 1e-15 * k.norm().max(1.0) {
            break;
        }
    }
    let residual = f(k)?.norm();
    if !residual.is_finite() {
        return Err(Error::EvaluationFailure(format!("Newton iterate left the domain at k = {k}")));
    }
    Ok(PolishedRoot { k, last_step, residual })
}

const MAX_DEPTH: u32 = 24;

fn isolate(f: &AnalyticFn, rect: KRect, count: usize, depth: u32) -> Result<Vec<(PolishedRoot, usize)>> {
    if count == 0 {
        return Ok(vec![]);
    }
    if count == 1 || depth >= MAX_DEPTH {
        // One zero (or an unresolvable cluster): start Newton from the center.
        let root = newton_polish(f, rect.center())?;
        let slack = 1e-9 * rect.diameter().max(1.0);
        let inside = root.k.re >= rect.re_min - slack
            && root.k.re <= rect.re_max + slack
            && root.k.im >= rect.im_min - slack
            && root.k.im <= rect.im_max + slack;
        if inside {
            return Ok(vec![(root, count)]);
        }
        if count > 1 {
            return Err(Error::CountUnstable(format!("cluster of {count} zeros could not be isolated")));
        }
    }
    for skew in [0.0123, -0.0371, 0.0611] {
        let quads = rect.split(skew);
        let counts: Vec<Result<usize>> = quads.par_iter().map(|q| zero_count(f, q)).collect();
        if counts.iter().any(|c| c.is_err()) {
            continue;
        }
        let counts: Vec<usize> = counts.into_iter().map(|c| c.unwrap()).collect();
        if counts.iter().sum::<usize>() != count {
            continue;
        }
        let found: Vec<Result<Vec<(PolishedRoot, usize)>>> = quads
            .par_iter()
            .zip(counts.par_iter())
            .map(|(q, &c)| isolate(f, *q, c, depth + 1))
            .collect();
        let mut out = Vec::new();
        for r in found {
            out.extend(r?);
        }
        return Ok(out);
    }
    Err(Error::CountUnstable(format!(
        "subdivision of a rectangle holding {count} zeros did not stabilize"
    )))
}

/// All zeros of `f` in `rect`, each with its multiplicity. The returned
/// multiplicities sum to the argument-principle count.
pub fn find_zeros(f: &AnalyticFn, rect: &KRect) -> Result<Vec<(PolishedRoot, usize)>> {
    let total = zero_count(f, rect)?;
    let mut roots = isolate(f, *rect, total, 0)?;
    roots.sort_by(|a, b| a.0.k.re.total_cmp(&b.0.k.re).then(a.0.k.im.total_cmp(&b.0.k.im)));
    let found: usize = roots.iter().map(|r| r.1).sum();
    if found != total {
        return Err(Error::CountUnstable(format!("census {total} but {found} zeros polished")));
    }
    Ok(roots)
}
