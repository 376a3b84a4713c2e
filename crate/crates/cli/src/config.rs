//! TOML run configuration.

use std::path::{Path, PathBuf};

use capres_core::caplimit::{EpsSchedule, SweepSetup, EPS0_GUARD_DEFAULT, JUMP_GUARD_DEFAULT};
use capres_core::deformation::{CutoffShape, DeformationMode, DeformationProfile};
use capres_core::discretization::{FdOrder, Grid1D, OperatorTag};
use capres_core::eigensolver::EigOptions;
use capres_core::oracle::KRect;
use capres_core::potentials::{build_chi, ChiCutoff, Cone, PotentialKind, PotentialSpec};
use capres_core::spectra::{ContourSpec, SectorWindow, ESSENTIAL_MARGIN_DEFAULT};
use capres_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSection,
    pub potential: PotentialKind,
    #[serde(default)]
    pub chi: Option<ChiSection>,
    pub grid: GridSection,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub contour: Vec<ContourSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub eig: EigSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default)]
    pub theta_re: f64,
    #[serde(default)]
    pub theta_im: f64,
    #[serde(default = "default_mode")]
    pub mode: DeformationMode,
    #[serde(default)]
    pub shape: Option<CutoffShape>,
}

fn default_beta0() -> f64 {
    std::f64::consts::FRAC_PI_8
}

fn default_mode() -> DeformationMode {
    DeformationMode::Exterior
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSection {
    /// Start radius; the final one when `adaptive` is off.
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default = "default_chi_width")]
    pub width: f64,
    #[serde(default = "default_true")]
    pub adaptive: bool,
    #[serde(default = "default_chi_step")]
    pub step: f64,
}

fn default_chi_width() -> f64 {
    1.0
}

fn default_chi_step() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L", default)]
    pub l: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_order")]
    pub order: u32,
}

fn default_scheme() -> Scheme {
    Scheme::FiniteDifference
}

fn default_order() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    /// Defaults to `Htheta` at `ε = 0` and `HepsTheta` otherwise.
    #[serde(default)]
    pub tag: Option<OperatorTag>,
    #[serde(default)]
    pub eps: f64,
    /// Relative tolerance of the Davies check for `V = Free`, `ε > 0`.
    #[serde(default)]
    pub davies_tolerance: Option<f64>,
    #[serde(default = "default_davies_count")]
    pub davies_count: usize,
}

fn default_davies_count() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_max: Option<f64>,
    #[serde(default)]
    pub eps_min: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default = "default_eps0_guard")]
    pub eps0_guard: f64,
    #[serde(default = "default_jump_guard")]
    pub jump_guard: f64,
    /// Check eigenvalue counts against `m_θ` on every configured contour.
    #[serde(default)]
    pub counting: bool,
}

fn default_eps0_guard() -> f64 {
    EPS0_GUARD_DEFAULT
}

fn default_jump_guard() -> f64 {
    JUMP_GUARD_DEFAULT
}

/// Either a disk (`center_re`, `center_im`, `radius`) or an explicit
/// annular sector (`arg_min`, `arg_max`, `r_min`, `r_max`), angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    #[serde(default)]
    pub center_re: Option<f64>,
    #[serde(default)]
    pub center_im: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub arg_min: Option<f64>,
    #[serde(default)]
    pub arg_max: Option<f64>,
    #[serde(default)]
    pub r_min: Option<f64>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub essential_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    pub center_re: f64,
    pub center_im: f64,
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            svg: false,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigSection {
    #[serde(default = "default_eig_tol")]
    pub tol: f64,
    /// Accepted for compatibility; the QR driver has no iteration cap.
    #[serde(default)]
    pub max_iter: Option<u64>,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_true")]
    pub balance: bool,
}

impl Default for EigSection {
    fn default() -> Self {
        EigSection {
            tol: default_eig_tol(),
            max_iter: None,
            max_dim: default_max_dim(),
            balance: true,
        }
    }
}

fn default_eig_tol() -> f64 {
    EigOptions::default().tol
}

fn default_max_dim() -> usize {
    EigOptions::default().max_dim
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Relative tolerance `|z_main - z_oracle| / |z_oracle|`.
    #[serde(default = "default_compare_tol")]
    pub tolerance: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            tolerance: default_compare_tol(),
        }
    }
}

fn default_compare_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// `[re_min, re_max, im_min, im_max]` in the momentum plane; derived
    /// from the window when absent.
    #[serde(default)]
    pub k_region: Option<[f64; 4]>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.check_static()?;
        Ok(cfg)
    }

    /// Checks that need no numerics.
    fn check_static(&self) -> Result<(), CliError> {
        if self.grid.n < 8 {
            return Err(invalid(format!("grid.N = {} is too small", self.grid.n)));
        }
        if self.grid.n > self.eig.max_dim {
            return Err(invalid(format!("grid.N = {} exceeds eig.max_dim = {}", self.grid.n, self.eig.max_dim)));
        }
        if !(self.operator.eps >= 0.0 && self.operator.eps.is_finite()) {
            return Err(invalid("operator.eps must be a non-negative number"));
        }
        if let Some(l) = self.grid.l {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("grid.L must be positive"));
            }
        }
        if !(self.compare.tolerance > 0.0) {
            return Err(invalid("compare.tolerance must be positive"));
        }
        for (k, c) in self.contour.iter().enumerate() {
            if !(c.radius > 0.0) {
                return Err(invalid(format!("contour {k}: radius must be positive")));
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> Complex64 {
        Complex64::new(self.profile.theta_re, self.profile.theta_im)
    }

    pub fn deformation(&self) -> capres_core::Result<DeformationProfile> {
        let p = &self.profile;
        DeformationProfile::new(p.r, p.beta0, self.theta(), p.shape.unwrap_or_default(), p.mode)
    }

    pub fn potential_spec(&self, profile: &DeformationProfile) -> capres_core::Result<PotentialSpec> {
        PotentialSpec::new(self.potential, Cone::from_profile(profile))
    }

    pub fn order(&self) -> capres_core::Result<FdOrder> {
        FdOrder::from_int(self.grid.order)
    }

    /// `ε_min` the grid has to cover: the schedule minimum, else the
    /// operator `ε` when positive.
    pub fn eps_floor(&self) -> Option<f64> {
        let sched = self.schedule().ok().flatten().map(|s| s.min());
        sched.or((self.operator.eps > 0.0).then_some(self.operator.eps))
    }

    pub fn grid(&self) -> capres_core::Result<Grid1D> {
        let l = self
            .grid
            .l
            .unwrap_or_else(|| Grid1D::auto_half_length(self.profile.r, self.eps_floor(), self.potential.feature_size()));
        Grid1D::new(l, self.grid.n)
    }

    pub fn schedule(&self) -> capres_core::Result<Option<EpsSchedule>> {
        let Some(s) = &self.schedule else {
            return Ok(None);
        };
        let sched = match (&s.values, s.eps_max, s.eps_min, s.ratio) {
            (Some(v), None, None, None) => EpsSchedule::new(v.clone(), s.eps0_guard)?,
            (None, Some(max), Some(min), Some(ratio)) => EpsSchedule::geometric_to(max, min, ratio)?.with_guard(s.eps0_guard)?,
            _ => {
                return Err(capres_core::Error::InvalidInput(
                    "schedule needs either `values` or all of `eps_max`, `eps_min`, `ratio`".into(),
                ))
            }
        };
        Ok(Some(sched))
    }

    pub fn window(&self) -> capres_core::Result<Option<SectorWindow>> {
        let Some(w) = &self.window else {
            return Ok(None);
        };
        let mut win = match (w.center_re, w.center_im, w.radius, w.arg_min, w.arg_max, w.r_min, w.r_max) {
            (Some(re), Some(im), Some(radius), None, None, None, None) => SectorWindow::around(Complex64::new(re, im), radius)?,
            (None, None, None, Some(arg_min), Some(arg_max), Some(r_min), Some(r_max)) => SectorWindow {
                arg_min,
                arg_max,
                r_min,
                r_max,
                essential_margin: ESSENTIAL_MARGIN_DEFAULT,
            },
            _ => {
                return Err(capres_core::Error::InvalidInput(
                    "window needs either center_re/center_im/radius or arg_min/arg_max/r_min/r_max".into(),
                ))
            }
        };
        if let Some(m) = w.essential_margin {
            win.essential_margin = m;
        }
        win.validate(self.theta())?;
        Ok(Some(win))
    }

    pub fn contours(&self) -> capres_core::Result<Vec<ContourSpec>> {
        self.contour
            .iter()
            .map(|c| ContourSpec::new(Complex64::new(c.center_re, c.center_im), c.radius, c.nodes))
            .collect()
    }

    pub fn eig_options(&self) -> EigOptions {
        EigOptions {
            tol: self.eig.tol,
            max_dim: self.eig.max_dim,
            balance: self.eig.balance,
        }
    }

    /// Operator tag for single-operator commands.
    pub fn tag(&self) -> OperatorTag {
        self.operator.tag.unwrap_or(if self.operator.eps > 0.0 {
            OperatorTag::HepsTheta
        } else {
            OperatorTag::Htheta
        })
    }

    pub fn fixed_chi(&self, grid: &Grid1D) -> capres_core::Result<Option<ChiCutoff>> {
        match self.chi {
            Some(c) if !c.adaptive => Ok(Some(build_chi(grid, c.t, c.width)?)),
            _ => Ok(None),
        }
    }

    pub fn sweep_setup(&self) -> capres_core::Result<SweepSetup> {
        let profile = self.deformation()?;
        let window = self
            .window()?
            .ok_or_else(|| capres_core::Error::InvalidInput("this command needs a [window] section".into()))?;
        let jump_guard = self.schedule.as_ref().map_or(JUMP_GUARD_DEFAULT, |s| s.jump_guard);
        Ok(SweepSetup {
            potential: self.potential_spec(&profile)?,
            profile,
            grid: self.grid()?,
            order: self.order()?,
            window,
            jump_guard,
            eig: self.eig_options(),
        })
    }

    /// Momentum-plane search region: configured, or the image of the window
    /// under `z ↦ √z` (lower branch for the lower half plane) with padding.
    pub fn k_region(&self) -> capres_core::Result<KRect> {
        if let Some([a, b, c, d]) = self.oracle.k_region {
            return KRect::new(a, b, c, d);
        }
        let w = self
            .window()?
            .ok_or_else(|| capres_core::Error::InvalidInput("oracle needs oracle.k_region or a [window]".into()))?;
        let mut pts = Vec::new();
        let steps = 16;
        for i in 0..=steps {
            let arg = w.arg_min + (w.arg_max - w.arg_min) * i as f64 / steps as f64;
            for r in [w.r_min.max(1e-6), w.r_max] {
                pts.push(Complex64::from_polar(r.sqrt(), 0.5 * arg));
            }
        }
        let re_min = pts.iter().map(|k| k.re).fold(f64::INFINITY, f64::min);
        let re_max = pts.iter().map(|k| k.re).fold(f64::NEG_INFINITY, f64::max);
        let im_min = pts.iter().map(|k| k.im).fold(f64::INFINITY, f64::min);
        let im_max = pts.iter().map(|k| k.im).fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (re_max - re_min).max(im_max - im_min);
        KRect::new(re_min - pad, re_max + pad, im_min - pad, im_max + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[profile]
R = 1.0
theta_im = 0.35

[potential]
kind = "poschl_teller"
V0 = 4.0

[grid]
N = 200
L = 30.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.profile.beta0, std::f64::consts::FRAC_PI_8);
        assert_eq!(cfg.grid.order, 4);
        assert_eq!(cfg.tag(), OperatorTag::Htheta);
        assert!(cfg.schedule().unwrap().is_none());
        assert!(cfg.deformation().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn schedule_forms() {
        let geo = format!("{MINIMAL}\n[schedule]\neps_max = 0.1\neps_min = 1e-4\nratio = 0.5\n");
        let cfg = RunConfig::parse(&geo).unwrap();
        assert_eq!(cfg.schedule().unwrap().unwrap().values().len(), 11);
        assert_eq!(cfg.eps_floor(), Some(0.1 * 0.5f64.powi(10)));

        let mixed = format!("{MINIMAL}\n[schedule]\nvalues = [0.1]\nratio = 0.5\n");
        let cfg = RunConfig::parse(&mixed).unwrap();
        assert!(cfg.schedule().is_err());
    }

    #[test]
    fn k_region_covers_the_window_preimage() {
        let text = format!("{MINIMAL}\n[window]\ncenter_re = 3.5\ncenter_im = -1.9365\nradius = 0.5\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let rect = cfg.k_region().unwrap();
        let k = Complex64::new(3.75f64.sqrt(), -0.5);
        assert!(rect.contains(k));
        assert!(!rect.contains(Complex64::new(0.0, 0.0)));
    }
}
