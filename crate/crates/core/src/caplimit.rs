//! The `ε → 0+` limit: sweeps over a schedule of CAP strengths, links
//! eigenvalues of `H_ε(θ)` into trajectories, extrapolates them to `ε = 0`
//! and counts eigenvalues in small disks.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::DeformationProfile;
use crate::discretization::{assemble, FdOrder, Grid1D, OperatorTag};
use crate::eigensolver::{eig_dense, EigOptions, Spectrum};
use crate::potentials::PotentialSpec;
use crate::spectra::{filter_sector, SectorWindow};
use crate::{Error, Result};

/// Largest admitted `ε` unless configured otherwise.
pub const EPS0_GUARD_DEFAULT: f64 = 0.25;
pub const JUMP_GUARD_DEFAULT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    values: Vec<f64>,
    eps0_guard: f64,
}

impl EpsSchedule {
    pub fn new(values: Vec<f64>, eps0_guard: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty eps schedule".into()));
        }
        if values.iter().any(|&e| !(e > 0.0 && e < eps0_guard)) {
            return Err(Error::ConstraintViolation(format!(
                "every eps must lie in (0, {eps0_guard})"
            )));
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::ConstraintViolation("eps schedule must be strictly decreasing".into()));
        }
        Ok(EpsSchedule { values, eps0_guard })
    }

    /// `eps_max · ratio^k` for `k = 0..count`.
    pub fn geometric(eps_max: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidInput(format!("ratio must be in (0, 1), got {ratio}")));
        }
        Self::new(
            (0..count).map(|k| eps_max * ratio.powi(k as i32)).collect(),
            EPS0_GUARD_DEFAULT,
        )
    }

    /// Geometric schedule from `eps_max` down to the first value not above
    /// `eps_min`.
    pub fn geometric_to(eps_max: f64, eps_min: f64, ratio: f64) -> Result<Self> {
        if !(eps_min > 0.0 && eps_min <= eps_max) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidInput("need 0 < eps_min <= eps_max and ratio in (0, 1)".into()));
        }
        let count = ((eps_min / eps_max).ln() / ratio.ln() - 1e-9).ceil().max(0.0) as usize + 1;
        Self::geometric(eps_max, ratio, count)
    }

    pub fn with_guard(mut self, eps0_guard: f64) -> Result<Self> {
        self.eps0_guard = eps0_guard;
        Self::new(self.values, eps0_guard)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eps0_guard(&self) -> f64 {
        self.eps0_guard
    }

    pub fn min(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Fixed inputs of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub potential: PotentialSpec,
    pub profile: DeformationProfile,
    pub grid: Grid1D,
    pub order: FdOrder,
    pub window: SectorWindow,
    pub jump_guard: f64,
    pub eig: EigOptions,
}

impl SweepSetup {
    /// Full spectrum of `H_ε(θ)`.
    pub fn spectrum_at(&self, eps: f64) -> Result<Spectrum> {
        let op = assemble(
            OperatorTag::HepsTheta,
            &self.grid,
            &self.profile,
            &self.potential,
            eps,
            None,
            self.order,
        )?;
        eig_dense(&op, &self.eig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub eps: f64,
    pub z: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackBreakReason {
    /// Nearest candidate violated the jump guard or none was left.
    Lost,
    /// Another track claimed the same eigenvalue even after bisection.
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackBreak {
    pub track_id: usize,
    /// Last `ε` reached before the break.
    pub eps: f64,
    pub reason: TrackBreakReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTrack {
    pub track_id: usize,
    pub points: Vec<TrackPoint>,
    /// Fitted `ε = 0` value; the last point for tracks shorter than three.
    pub extrapolated: Complex64,
    /// Fitted leading exponent; absent for tracks shorter than three.
    pub fit_exponent: Option<f64>,
    pub broken: bool,
}

impl ResonanceTrack {
    pub fn last(&self) -> &TrackPoint {
        self.points.last().unwrap()
    }

    /// `|z(ε_k) - reference|` over the points.
    pub fn errors(&self, reference: Complex64) -> Vec<f64> {
        self.points.iter().map(|p| (p.z - reference).norm()).collect()
    }

    /// Errors against `reference` do not increase over the last `n` points.
    pub fn tail_non_increasing(&self, reference: Complex64, n: usize) -> bool {
        let e = self.errors(reference);
        if e.len() < n {
            return false;
        }
        e[e.len() - n..].windows(2).all(|w| w[1] <= w[0])
    }
}

/// Windowed eigenvalues at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSlice {
    pub eps: f64,
    pub eigenvalues: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// Largest residual over the whole spectrum, a breakdown indicator.
    pub max_residual: f64,
}

impl EpsSlice {
    fn from_spectrum(eps: f64, spec: &Spectrum, window: &SectorWindow) -> Self {
        let w = filter_sector(spec, window);
        EpsSlice {
            eps,
            eigenvalues: w.eigenvalues,
            residuals: w.residuals,
            max_residual: spec.max_residual(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub slices: Vec<EpsSlice>,
    pub tracks: Vec<ResonanceTrack>,
    pub breaks: Vec<TrackBreak>,
    /// `ε` values inserted by collision bisection.
    pub bisections: Vec<f64>,
}

struct Active {
    id: usize,
    points: Vec<TrackPoint>,
    broken: bool,
}

/// Assignment of active tracks to candidates: `Some(j)` per track or
/// `None` if lost. Returns `Err(())` on a collision.
fn assign(tracks: &[&Active], cand: &[Complex64], jump_guard: f64) -> std::result::Result<Vec<Option<usize>>, ()> {
    let mut out = Vec::with_capacity(tracks.len());
    for t in tracks {
        let z = t.points.last().unwrap().z;
        let best = cand
            .iter()
            .enumerate()
            .map(|(j, c)| (j, (c - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.push(match best {
            Some((j, d)) if d < jump_guard * (z.norm() + 1.0) => Some(j),
            _ => None,
        });
    }
    let mut seen = vec![false; cand.len()];
    for j in out.iter().flatten() {
        if seen[*j] {
            return Err(());
        }
        seen[*j] = true;
    }
    Ok(out)
}

/// Resolves a collision greedily: closest (track, candidate) pairs first.
fn assign_greedy(tracks: &[&Active], cand: &[Complex64], jump_guard: f64) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        let z = t.points.last().unwrap().z;
        for (j, c) in cand.iter().enumerate() {
            let d = (c - z).norm();
            if d < jump_guard * (z.norm() + 1.0) {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; tracks.len()];
    let mut used = vec![false; cand.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Computes every `ε` of the schedule (in parallel), then links windowed
/// eigenvalues across consecutive `ε` by nearest-neighbour continuation.
pub fn run_sweep(setup: &SweepSetup, schedule: &EpsSchedule) -> Result<SweepResult> {
    let window = setup.window;
    window.validate(setup.profile.theta())?;
    let slices: Vec<Result<EpsSlice>> = schedule
        .values()
        .par_iter()
        .map(|&eps| Ok(EpsSlice::from_spectrum(eps, &setup.spectrum_at(eps)?, &window)))
        .collect();
    let slices = slices.into_iter().collect::<Result<Vec<_>>>()?;
    link(setup, slices)
}

fn link(setup: &SweepSetup, slices: Vec<EpsSlice>) -> Result<SweepResult> {
    let mut next_id = 0;
    let mut active: Vec<Active> = Vec::new();
    let mut finished: Vec<Active> = Vec::new();
    let mut breaks = Vec::new();
    let mut bisections = Vec::new();

    let start = |active: &mut Vec<Active>, next_id: &mut usize, slice: &EpsSlice, taken: &[bool]| {
        for (j, (&z, &r)) in slice.eigenvalues.iter().zip(&slice.residuals).enumerate() {
            if !taken[j] {
                active.push(Active {
                    id: *next_id,
                    points: vec![TrackPoint { eps: slice.eps, z, residual: r }],
                    broken: false,
                });
                *next_id += 1;
            }
        }
    };

    for (k, slice) in slices.iter().enumerate() {
        if k == 0 {
            start(&mut active, &mut next_id, slice, &vec![false; slice.eigenvalues.len()]);
            continue;
        }
        let refs: Vec<&Active> = active.iter().collect();
        let mut assignment = assign(&refs, &slice.eigenvalues, setup.jump_guard);
        let mut collided = false;
        if assignment.is_err() {
            // Bisect the step once: link through the geometric midpoint.
            let mid_eps = (slices[k - 1].eps * slice.eps).sqrt();
            bisections.push(mid_eps);
            let mid = EpsSlice::from_spectrum(mid_eps, &setup.spectrum_at(mid_eps)?, &setup.window);
            if let Ok(via) = assign(&refs, &mid.eigenvalues, setup.jump_guard) {
                let proxies: Vec<Active> = via
                    .iter()
                    .zip(&refs)
                    .map(|(j, t)| Active {
                        id: t.id,
                        points: vec![TrackPoint {
                            eps: mid_eps,
                            z: j.map(|j| mid.eigenvalues[j]).unwrap_or(t.points.last().unwrap().z),
                            residual: 0.0,
                        }],
                        broken: false,
                    })
                    .collect();
                let proxy_refs: Vec<&Active> = proxies.iter().collect();
                assignment = assign(&proxy_refs, &slice.eigenvalues, setup.jump_guard);
            }
            if assignment.is_err() {
                collided = true;
            }
        }
        let assignment = match assignment {
            Ok(a) => a,
            Err(()) => assign_greedy(&refs, &slice.eigenvalues, setup.jump_guard),
        };
        let mut taken = vec![false; slice.eigenvalues.len()];
        let mut still = Vec::new();
        for (mut t, a) in active.drain(..).zip(assignment) {
            match a {
                Some(j) => {
                    taken[j] = true;
                    t.points.push(TrackPoint {
                        eps: slice.eps,
                        z: slice.eigenvalues[j],
                        residual: slice.residuals[j],
                    });
                    still.push(t);
                }
                None => {
                    t.broken = true;
                    breaks.push(TrackBreak {
                        track_id: t.id,
                        eps: t.points.last().unwrap().eps,
                        reason: if collided {
                            TrackBreakReason::Collision
                        } else {
                            TrackBreakReason::Lost
                        },
                    });
                    finished.push(t);
                }
            }
        }
        active = still;
        start(&mut active, &mut next_id, slice, &taken);
    }
    finished.extend(active);
    finished.sort_by_key(|t| t.id);
    let tracks = finished
        .into_iter()
        .map(|t| {
            let (extrapolated, fit_exponent) = match extrapolate(&t.points) {
                Ok((z0, p)) => (z0, Some(p)),
                Err(_) => (t.points.last().unwrap().z, None),
            };
            ResonanceTrack {
                track_id: t.id,
                points: t.points,
                extrapolated,
                fit_exponent,
                broken: t.broken,
            }
        })
        .collect();
    Ok(SweepResult {
        slices,
        tracks,
        breaks,
        bisections,
    })
}

/// Least-squares fit `z(ε) = z0 + c₁ ε^{1/2} + c₂ ε` over the last
/// `max(3, ⌈len/2⌉)` points. Returns `z0` and the slope of
/// `log |z(ε) - z0|` against `log ε` over the same points.
pub fn extrapolate(points: &[TrackPoint]) -> Result<(Complex64, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!("extrapolation needs 3 points, got {}", points.len())));
    }
    let m = 3.max(points.len().div_ceil(2));
    let pts = &points[points.len() - m..];
    // Modified Gram-Schmidt QR on columns [1, √ε, ε].
    let mut q: Vec<Vec<f64>> = vec![
        pts.iter().map(|_| 1.0).collect(),
        pts.iter().map(|p| p.eps.sqrt()).collect(),
        pts.iter().map(|p| p.eps).collect(),
    ];
    let mut r = [[0.0f64; 3]; 3];
    for j in 0..3 {
        let orig: f64 = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..j {
            let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = d;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= d * u;
            }
        }
        let nrm: f64 = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nrm > 1e-10 * orig) {
            return Err(Error::FitDegenerate);
        }
        r[j][j] = nrm;
        for v in q[j].iter_mut() {
            *v /= nrm;
        }
    }
    let qtz: Vec<Complex64> = (0..3)
        .map(|i| q[i].iter().zip(pts).map(|(a, p)| *a * p.z).sum())
        .collect();
    let mut c = [Complex64::new(0.0, 0.0); 3];
    for i in (0..3).rev() {
        let mut s = qtz[i];
        for j in i + 1..3 {
            s -= r[i][j] * c[j];
        }
        c[i] = s / r[i][i];
    }
    let z0 = c[0];

    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter_map(|p| {
            let d = (p.z - z0).norm();
            (d > 1e-14 * z0.norm().max(1.0)).then(|| (p.eps.ln(), d.ln()))
        })
        .collect();
    let exponent = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
        let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok((z0, exponent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub center: Complex64,
    pub delta: f64,
    /// Multiplicity at `ε = 0`.
    pub m_theta: i64,
    /// `(ε, count)` in schedule order.
    pub counts: Vec<(f64, usize)>,
    /// Largest schedule `ε` such that counts agree with `m_theta` at it and
    /// at every smaller schedule value.
    pub eps_prime: Option<f64>,
    /// Schedule values whose count differs from `m_theta`.
    pub mismatches: Vec<f64>,
}

/// Counts windowed eigenvalues inside `B(center, delta)` at each `ε` of a
/// sweep and compares with `m_theta`.
pub fn verify_counting(sweep: &SweepResult, window: &SectorWindow, center: Complex64, delta: f64, m_theta: i64) -> Result<CountReport> {
    let disk = SectorWindow::around(center, delta)?;
    if !(disk.arg_min >= window.arg_min && disk.arg_max <= window.arg_max && disk.r_min >= window.r_min && disk.r_max <= window.r_max) {
        return Err(Error::InvalidInput(format!(
            "disk B({center}, {delta}) is not inside the sweep window"
        )));
    }
    let counts: Vec<(f64, usize)> = sweep
        .slices
        .iter()
        .map(|s| (s.eps, s.eigenvalues.iter().filter(|z| (*z - center).norm() < delta).count()))
        .collect();
    let mismatches: Vec<f64> = counts
        .iter()
        .filter(|(_, c)| *c as i64 != m_theta)
        .map(|(e, _)| *e)
        .collect();
    // Walk up from the smallest ε while counts agree.
    let agreeing = counts.iter().rev().take_while(|(_, c)| *c as i64 == m_theta).count();
    let eps_prime = (agreeing > 0).then(|| counts[counts.len() - agreeing].0);
    Ok(CountReport {
        center,
        delta,
        m_theta,
        counts,
        eps_prime,
        mismatches,
    })
}
