use std::fmt;

use num_complex::Complex64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which clause of the contour geometry check failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryClause {
    /// `φ_θ(x) = x` inside `|x| < 2R`.
    IdentityCore,
    /// `φ_θ(x)` lies on the ray of angle `a(θ)` for `|x| > 8R`.
    OuterRay,
    /// `|Im φ| < tan β₀ |Re φ|` wherever `Im φ ≠ 0`.
    ConeAperture,
    /// `|Re φ(x)| > R` for `|x| ≥ 2R`.
    ConeTruncation,
}

impl fmt::Display for GeometryClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeometryClause::IdentityCore => "(i) identity for |x| < 2R",
            GeometryClause::OuterRay => "(ii) ray of angle a(theta) for |x| > 8R",
            GeometryClause::ConeAperture => "(iii) |Im phi| < tan(beta0) |Re phi|",
            GeometryClause::ConeTruncation => "(iv) |Re phi| > R for |x| >= 2R",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("geometry violation in clause {clause} at x = {x}: {detail}")]
    GeometryViolation {
        clause: GeometryClause,
        x: f64,
        detail: String,
    },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("eigensolver failed: {unconverged} eigenpairs did not converge")]
    ConvergenceFailure { unconverged: usize },

    #[error("shifted matrix is numerically singular at z = {z} (rcond estimate {rcond:e})")]
    NearSingular { z: Complex64, rcond: f64 },

    #[error("{unmatched} eigenvalues left unmatched (max pair distance {max_distance:e})")]
    MatchFailure { unmatched: usize, max_distance: f64 },

    #[error("split operator H - chi V - w is singular on the contour at w = {w}")]
    SplitInvertibilityFailure { w: Complex64 },

    #[error("extrapolation design matrix is rank deficient")]
    FitDegenerate,

    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),

    #[error("argument-principle count did not stabilise: {0}")]
    CountUnstable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
