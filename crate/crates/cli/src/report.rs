//! Records written by the commands. Every record carries [`Metadata`] and
//! deserializes back so its verdicts can be recomputed.

use capres_core::caplimit::{CountReport, TrackBreak};
use capres_core::discretization::OperatorTag;
use capres_core::oracle::OracleMethod;
use capres_core::potentials::PotentialKind;
use capres_core::spectra::{SectorWindow, ROUNDING_TOLERANCE};
use capres_core::Complex64;
use serde::{Deserialize, Serialize};

pub const UNITS: &str = "dimensionless, hbar = 2m = 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for C {
    fn from(z: Complex64) -> Self {
        C { re: z.re, im: z.im }
    }
}

impl From<C> for Complex64 {
    fn from(c: C) -> Self {
        Complex64::new(c.re, c.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub program: String,
    pub version: String,
    pub command: String,
    pub units: String,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Metadata {
            program: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            units: UNITS.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSummary {
    pub plateau: f64,
    pub sup_slope: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRecord {
    pub metadata: Metadata,
    pub theta: C,
    pub beta0: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub cutoff: Option<CutoffSummary>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigRow {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

/// One main-path value against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub reference: C,
    pub main: Option<C>,
    pub rel_error: Option<f64>,
    pub pass: bool,
}

impl CompareRow {
    pub fn new(reference: Complex64, main: Option<Complex64>, tolerance: f64) -> Self {
        let rel_error = main.map(|m| (m - reference).norm() / reference.norm());
        let mut row = CompareRow {
            reference: reference.into(),
            main: main.map(Into::into),
            rel_error,
            pass: false,
        };
        row.pass = row.verdict(tolerance);
        row
    }

    pub fn verdict(&self, tolerance: f64) -> bool {
        self.rel_error.is_some_and(|e| e < tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaviesCheck {
    pub tolerance: f64,
    pub rows: Vec<CompareRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub metadata: Metadata,
    pub tag: OperatorTag,
    pub theta: C,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub order: u32,
    pub eigenvalues: Vec<EigRow>,
    pub window: Option<SectorWindow>,
    /// Indices into `eigenvalues` of the values inside the window.
    pub in_window: Vec<usize>,
    pub davies: Option<DaviesCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub eps: f64,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track_id: usize,
    /// Absent for tracks too short to fit.
    pub extrapolated: Option<C>,
    pub fit_exponent: Option<f64>,
    pub broken: bool,
    pub points: Vec<PointRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub metadata: Metadata,
    pub theta: C,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub schedule: Vec<f64>,
    pub window: SectorWindow,
    pub tracks: Vec<TrackSummary>,
    pub breaks: Vec<TrackBreak>,
    pub bisections: Vec<f64>,
    pub counting: Vec<CountReport>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityRow {
    pub center: C,
    pub radius: f64,
    pub nodes: usize,
    pub m_direct: C,
    pub m_logderiv: C,
    pub rounded: i64,
    pub gap: f64,
    pub quadrature_gap: f64,
    pub brute_count: Option<usize>,
    #[serde(rename = "chi_T")]
    pub chi_t: f64,
    pub neumann_norm: Option<f64>,
    pub pass: bool,
}

impl MultiplicityRow {
    pub fn verdict(&self) -> bool {
        let m = Complex64::from(self.m_direct);
        let close = (m - self.rounded as f64).norm() < ROUNDING_TOLERANCE && self.gap < ROUNDING_TOLERANCE;
        close && self.brute_count.is_none_or(|n| n as i64 == self.rounded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityRecord {
    pub metadata: Metadata,
    pub tag: OperatorTag,
    pub theta: C,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub contours: Vec<MultiplicityRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRecord {
    pub metadata: Metadata,
    pub potential: PotentialKind,
    pub theta: C,
    pub tolerance: f64,
    /// `davies` or `resonances`.
    pub reference: String,
    pub rows: Vec<CompareRow>,
    pub pass: bool,
}

impl CompareRecord {
    /// Verdicts recomputed from the stored values.
    pub fn recheck(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.verdict(self.tolerance)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub metadata: Metadata,
    pub potential: PotentialKind,
    pub eps: Option<f64>,
    pub k_region: Option<[f64; 4]>,
    pub values: Vec<C>,
    pub k_values: Vec<C>,
    pub method: OracleMethod,
    pub certified_digits: u32,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
