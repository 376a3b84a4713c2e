//! Dense non-Hermitian eigendecomposition, shifted solves and resolvent
//! traces.
//!
//! The decomposition itself (Hessenberg reduction, multishift QR, Schur
//! back-substitution for eigenvectors) comes from `faer`; this module adds
//! diagonal balancing, backward-error residuals for every pair, and a
//! deterministic ordering. For non-normal matrices the residuals are the
//! only trustworthy accuracy measure, so they are always reported.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::discretization::{OperatorMatrix, OperatorTag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Largest admissible backward error `‖Av - λv‖ / (‖A‖ ‖v‖)`.
    pub tol: f64,
    /// Largest matrix dimension accepted.
    pub max_dim: usize,
    pub balance: bool,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-10,
            max_dim: 4096,
            balance: true,
        }
    }
}

/// Provenance copied from the decomposed operator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumMeta {
    pub tag: Option<OperatorTag>,
    pub theta: Complex64,
    pub eps: f64,
    pub n: usize,
    pub half_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by `(|z|, arg z)`.
    pub eigenvalues: Vec<Complex64>,
    /// `‖A v_j - λ_j v_j‖ / (‖A‖ ‖v_j‖)`, aligned with `eigenvalues`.
    pub residuals: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Keeps the pairs selected by `keep`, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(Complex64) -> bool) -> Spectrum {
        let (eigenvalues, residuals) = self
            .eigenvalues
            .iter()
            .zip(&self.residuals)
            .filter(|(z, _)| keep(**z))
            .map(|(&z, &r)| (z, r))
            .unzip();
        Spectrum {
            eigenvalues,
            residuals,
            meta: self.meta.clone(),
        }
    }
}

/// `(|z|, arg z)` ordering used for every reported eigenvalue list.
pub fn spectral_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.norm()
        .total_cmp(&b.norm())
        .then_with(|| a.arg().total_cmp(&b.arg()))
}

/// `sqrt(‖A‖₁ ‖A‖_∞)`, an upper bound for the spectral norm.
pub fn norm_estimate(a: MatRef<'_, Complex64>) -> f64 {
    let n = a.nrows();
    let mut rows = vec![0.0f64; n];
    let mut max_col = 0.0f64;
    for j in 0..a.ncols() {
        let mut col = 0.0;
        for i in 0..n {
            let v = a[(i, j)].norm();
            col += v;
            rows[i] += v;
        }
        max_col = max_col.max(col);
    }
    let max_row = rows.into_iter().fold(0.0, f64::max);
    (max_col * max_row).sqrt()
}

/// Parlett-Reinsch balancing by powers of two. Returns the scaling `d`
/// such that the balanced matrix is `D⁻¹ A D`.
fn balance(a: &mut Mat<Complex64>) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0f64; n];
    const RADIX: f64 = 2.0;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 64 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].norm();
                    r += a[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut c2 = c;
            let r_div = r / RADIX;
            while c2 < r_div {
                c2 *= RADIX * RADIX;
                f *= RADIX;
            }
            let r_mul = r * RADIX;
            while c2 >= r_mul {
                c2 /= RADIX * RADIX;
                f /= RADIX;
            }
            let c_new = c * f;
            let r_new = r / f;
            if (c_new + r_new) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    d
}

/// Eigenvalues, residuals and (optionally) right eigenvectors of a raw
/// square matrix.
pub struct RawEigen {
    pub eigenvalues: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub vectors: Option<Mat<Complex64>>,
}

pub fn eig_matrix(a: MatRef<'_, Complex64>, opts: &EigOptions, keep_vectors: bool) -> Result<RawEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if n > opts.max_dim {
        return Err(Error::InvalidInput(format!(
            "dimension {n} exceeds the dense eigensolver cap {}",
            opts.max_dim
        )));
    }
    if n == 0 {
        return Ok(RawEigen {
            eigenvalues: vec![],
            residuals: vec![],
            vectors: keep_vectors.then(|| Mat::zeros(0, 0)),
        });
    }
    if a.col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut work = a.to_owned();
    let scaling = if opts.balance { balance(&mut work) } else { vec![1.0; n] };
    let evd = work.eigen().map_err(|_| Error::ConvergenceFailure { unconverged: n })?;
    let s = evd.S();
    let u = evd.U();
    let mut vecs = Mat::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut norm = 0.0;
        for i in 0..n {
            let v = u[(i, j)] * scaling[i];
            vecs[(i, j)] = v;
            norm += v.norm_sqr();
        }
        let inv = 1.0 / norm.sqrt();
        for i in 0..n {
            vecs[(i, j)] *= inv;
        }
    }
    let lambdas: Vec<Complex64> = (0..n).map(|j| s[j]).collect();
    let av = a * &vecs;
    let a_norm = norm_estimate(a).max(f64::MIN_POSITIVE);
    let mut residuals = Vec::with_capacity(n);
    for j in 0..n {
        let mut r = 0.0;
        for i in 0..n {
            r += (av[(i, j)] - lambdas[j] * vecs[(i, j)]).norm_sqr();
        }
        residuals.push(r.sqrt() / a_norm);
    }
    let unconverged = residuals.iter().filter(|&&r| !(r <= opts.tol)).count();
    if unconverged > 0 {
        return Err(Error::ConvergenceFailure { unconverged });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| spectral_order(&lambdas[i], &lambdas[j]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| lambdas[i]).collect();
    let residuals_sorted = order.iter().map(|&i| residuals[i]).collect();
    let vectors = keep_vectors.then(|| Mat::from_fn(n, n, |i, j| vecs[(i, order[j])]));
    Ok(RawEigen {
        eigenvalues,
        residuals: residuals_sorted,
        vectors,
    })
}

/// All eigenvalues of an assembled operator with their residuals.
pub fn eig_dense(a: &OperatorMatrix, opts: &EigOptions) -> Result<Spectrum> {
    let raw = eig_matrix(a.entries.as_ref(), opts, false)?;
    Ok(Spectrum {
        eigenvalues: raw.eigenvalues,
        residuals: raw.residuals,
        meta: SpectrumMeta {
            tag: Some(a.tag),
            theta: a.params.theta,
            eps: a.params.eps,
            n: a.dim(),
            half_length: a.grid.half_length(),
        },
    })
}

/// Below this reciprocal condition estimate `A - zI` counts as singular.
pub const RCOND_FLOOR: f64 = 1e-14;

/// LU factorization of `A - zI`, reused across right-hand sides.
pub struct ShiftedSolver {
    lu: PartialPivLu<Complex64>,
    z: Complex64,
    rcond: f64,
}

impl ShiftedSolver {
    pub fn new(a: MatRef<'_, Complex64>, z: Complex64) -> Result<Self> {
        let n = a.nrows();
        let mut shifted = a.to_owned();
        for i in 0..n {
            shifted[(i, i)] -= z;
        }
        let lu = shifted.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = u[(i, i)].norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(rcond > RCOND_FLOOR) {
            return Err(Error::NearSingular { z, rcond });
        }
        Ok(ShiftedSolver { lu, z, rcond })
    }

    pub fn shift(&self) -> Complex64 {
        self.z
    }

    /// Ratio of smallest to largest pivot modulus.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// `(A - zI)⁻¹ B`.
    pub fn solve(&self, b: MatRef<'_, Complex64>) -> Mat<Complex64> {
        self.lu.solve(b)
    }

    /// `(A - zI)⁻ᴴ B`.
    pub fn solve_adjoint(&self, b: MatRef<'_, Complex64>) -> Mat<Complex64> {
        self.lu.solve_adjoint(b)
    }

    /// `tr (A - zI)⁻¹`.
    pub fn trace_inverse(&self) -> Complex64 {
        let n = self.lu.U().nrows();
        let inv = self.solve(Mat::<Complex64>::identity(n, n).as_ref());
        (0..n).map(|i| inv[(i, i)]).sum()
    }
}

/// `X` with `(A - zI) X = B`.
pub fn solve_shifted(a: MatRef<'_, Complex64>, z: Complex64, b: MatRef<'_, Complex64>) -> Result<Mat<Complex64>> {
    Ok(ShiftedSolver::new(a, z)?.solve(b))
}

/// `tr (A - zI)⁻¹`.
pub fn resolvent_trace(a: MatRef<'_, Complex64>, z: Complex64) -> Result<Complex64> {
    Ok(ShiftedSolver::new(a, z)?.trace_inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> Mat<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_matrix() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { [c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)][i] } else { c(0.0, 0.0) });
        let e = eig_matrix(a.as_ref(), &EigOptions::default(), false).unwrap();
        assert_eq!(e.eigenvalues, vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)]);
        assert!(e.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn residuals_and_order_on_random_matrix() {
        let a = random_matrix(60, 7);
        let e = eig_matrix(a.as_ref(), &EigOptions::default(), true).unwrap();
        assert!(e.residuals.iter().all(|&r| r < 1e-12));
        for w in e.eigenvalues.windows(2) {
            assert_ne!(spectral_order(&w[0], &w[1]), std::cmp::Ordering::Greater);
        }
        // Trace is preserved.
        let tr: Complex64 = (0..60).map(|i| a[(i, i)]).sum();
        let sum: Complex64 = e.eigenvalues.iter().sum();
        assert!((tr - sum).norm() < 1e-10);
    }

    #[test]
    fn similarity_invariance_with_bad_scaling() {
        let n = 40;
        let a = random_matrix(n, 11);
        let scale: Vec<f64> = (0..n).map(|i| 2f64.powf((i % 7) as f64 - 3.0) * 1.3).collect();
        let b = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale[i] / scale[j]);
        let ea = eig_matrix(a.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        let eb = eig_matrix(b.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        for z in &ea {
            let d = eb.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-7, "{d:e}");
        }
    }

    #[test]
    fn balancing_is_a_similarity() {
        let a = Mat::from_fn(4, 4, |i, j| c(((i + 1) * (j + 2)) as f64 * 10f64.powi(i as i32 - j as i32), 0.1 * j as f64));
        let mut b = a.clone();
        let d = balance(&mut b);
        for i in 0..4 {
            for j in 0..4 {
                assert!((b[(i, j)] - a[(i, j)] * d[j] / d[i]).norm() < 1e-12 * a[(i, j)].norm().max(1.0));
            }
        }
    }

    #[test]
    fn dimension_cap() {
        let a = Mat::<Complex64>::zeros(5, 5);
        let opts = EigOptions {
            max_dim: 4,
            ..EigOptions::default()
        };
        assert!(matches!(eig_matrix(a.as_ref(), &opts, false), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn shifted_solves() {
        let id = Mat::<Complex64>::identity(4, 4);
        let x = solve_shifted(id.as_ref(), c(0.0, 0.0), id.as_ref()).unwrap();
        assert_eq!(x, id);

        let a = random_matrix(30, 3);
        let z = c(0.3, -0.2);
        let mut b = a.clone();
        for i in 0..30 {
            b[(i, i)] -= z;
        }
        let x = solve_shifted(a.as_ref(), z, b.as_ref()).unwrap();
        let id30 = Mat::<Complex64>::identity(30, 30);
        assert!((&x - &id30).norm_max() < 1e-12);
    }

    #[test]
    fn singular_shift_detected() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { c(i as f64, 0.0) } else { c(0.0, 0.0) });
        assert!(matches!(
            ShiftedSolver::new(a.as_ref(), c(1.0, 0.0)),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn trace_examples() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { c((i + 1) as f64, 0.0) } else { c(0.0, 0.0) });
        let t = resolvent_trace(a.as_ref(), c(0.0, 0.0)).unwrap();
        assert!((t - c(1.5, 0.0)).norm() < 1e-15);

        let b = random_matrix(20, 5);
        for r in [1e3, 1e4, 1e5] {
            let z = Complex64::from_polar(r, 0.7);
            let t = resolvent_trace(b.as_ref(), z).unwrap();
            assert!((t.norm() * r / 20.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn trace_matches_eigen_sum() {
        let a = random_matrix(50, 9);
        let ev = eig_matrix(a.as_ref(), &EigOptions::default(), false).unwrap().eigenvalues;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let z = c(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
            let t = resolvent_trace(a.as_ref(), z).unwrap();
            let s: Complex64 = ev.iter().map(|l| 1.0 / (l - z)).sum();
            assert!((t - s).norm() / s.norm() < 1e-8);
        }
    }
}
