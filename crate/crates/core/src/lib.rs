//! Scattering resonances of one-dimensional Schrödinger operators
//! `H = -d²/dx² + V` computed two ways: as eigenvalues of the exterior
//! complex-scaled operator `H(θ)`, and as limits of eigenvalues of the
//! complex-absorbing-potential operator `H_ε = -d²/dx² - iεx² + V` when
//! `ε → 0+`.
//!
//! Units are dimensionless throughout (`ħ = 2m = 1`).
//!
//! Module map:
//!
//! - [`deformation`]: cutoff `h`, map `φ_θ(x) = x + θ h(|x|) x`, Jacobian and
//!   the contour geometry checks.
//! - [`potentials`]: closed-form potentials evaluated along the deformed
//!   contour, plus the compactly supported cutoff `χ`.
//! - [`discretization`]: finite-difference matrices for `H`, `H(θ)`, `H_ε`,
//!   `H_ε(θ)` and `H_ε(θ) - χV`.
//! - [`eigensolver`]: dense non-Hermitian eigendecomposition with residuals,
//!   shifted solves and resolvent traces.
//! - [`spectra`]: sector filtering, spectrum matching, contour multiplicities
//!   and resolvent-norm probes.
//! - [`caplimit`]: ε-sweeps, trajectory tracking, extrapolation and counting.
//! - [`oracle`]: independent reference values (Davies spectrum, outgoing-wave
//!   determinants and their roots).

pub mod caplimit;
pub mod deformation;
pub mod discretization;
pub mod eigensolver;
mod error;
pub mod oracle;
pub mod potentials;
pub mod spectra;

pub use error::{Error, GeometryClause, Result};
pub use num_complex::Complex64;

/// Unit imaginary number.
pub const I: Complex64 = Complex64::new(0.0, 1.0);
