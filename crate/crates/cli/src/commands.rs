//! Subcommand pipelines. Each command computes everything in memory and
//! returns the files to write, so a failure leaves no partial output.

use std::fs;
use std::path::Path;

use capres_core::caplimit::{run_sweep, verify_counting, SweepResult};
use capres_core::deformation::{DeformationMode, CUTOFF_SLOPE_BOUND};
use capres_core::discretization::{assemble, OperatorTag};
use capres_core::eigensolver::eig_dense;
use capres_core::oracle::{davies_result, davies_spectrum, OracleCache, OracleResult};
use capres_core::potentials::{build_chi, PotentialKind, PotentialSpec};
use capres_core::spectra::{multiplicity_direct, multiplicity_report, select_chi, ContourSpec, ESSENTIAL_MARGIN_DEFAULT};
use capres_core::Complex64;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::*;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Spectrum,
    Sweep,
    Multiplicity,
    Compare,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Multiplicity => "multiplicity",
            Command::Compare => "compare",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// A configured tolerance was violated.
    ToleranceFailure,
    /// A physical constraint of the configuration was violated.
    ConstraintFailure,
}

#[derive(Debug)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub status: Status,
    pub summary: String,
}

impl Output {
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, svg: bool) -> Result<Output, CliError> {
    match cmd {
        Command::Validate => validate(cfg),
        Command::Spectrum => spectrum(cfg, svg),
        Command::Sweep => sweep(cfg, svg),
        Command::Multiplicity => multiplicity(cfg),
        Command::Compare => compare(cfg, svg),
        Command::Oracle => oracle(cfg),
    }
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::ToleranceFailure
    }
}

fn check<T>(checks: &mut Vec<Check>, name: &str, r: capres_core::Result<T>, detail: impl FnOnce(&T) -> String) -> Option<T> {
    match r {
        Ok(v) => {
            checks.push(Check {
                name: name.into(),
                pass: true,
                detail: detail(&v),
            });
            Some(v)
        }
        Err(e) => {
            checks.push(Check {
                name: name.into(),
                pass: false,
                detail: e.to_string(),
            });
            None
        }
    }
}

fn validate(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut checks = Vec::new();
    let theta = cfg.theta();
    let mut cutoff = None;
    let profile = check(&mut checks, "profile", cfg.deformation(), |p| {
        format!("beta0 = {}, theta = {}, a(theta) = {:.6}", p.beta0(), p.theta(), p.a_of_theta())
    });
    let grid = check(&mut checks, "grid", cfg.grid(), |g| format!("N = {}, L = {}, h = {:.5}", g.len(), g.half_length(), g.spacing()));
    if let Some(p) = &profile {
        let table = p.cutoff();
        let summary = CutoffSummary {
            plateau: table.plateau(),
            sup_slope: table.sup_slope(),
            bound: CUTOFF_SLOPE_BOUND,
            margin: CUTOFF_SLOPE_BOUND - table.sup_slope(),
        };
        checks.push(Check {
            name: "cutoff".into(),
            pass: summary.margin >= 0.0,
            detail: format!("sup(h + t h') = {:.6}, margin {:.6}", summary.sup_slope, summary.margin),
        });
        cutoff = Some(summary);
        let reach = grid.as_ref().map_or(12.0 * p.r(), |g| g.half_length()).max(12.0 * p.r());
        let samples: Vec<f64> = (0..=20_000).map(|k| -reach + 2.0 * reach * k as f64 / 20_000.0).collect();
        if p.mode() == DeformationMode::Exterior {
            check(&mut checks, "geometry", p.validate_geometry(&samples), |r| {
                format!(
                    "{} samples, outer ray deviation {:.2e}, aperture margin {:.3e}, truncation margin {:.3e}",
                    r.samples, r.ray_max_deviation, r.aperture_min_margin, r.truncation_min_margin
                )
            });
        }
        check(&mut checks, "potential", cfg.potential_spec(p), |s| format!("pole clearance {:.4}", s.pole_clearance));
    }
    if let Some(g) = &grid {
        check(&mut checks, "coverage", g.check_coverage(cfg.profile.r, cfg.eps_floor()), |_| "grid reaches the ray and CAP regions".into());
    }
    check(&mut checks, "order", cfg.order(), |o| format!("order {}", o.as_int()));
    if cfg.schedule.is_some() {
        check(&mut checks, "schedule", cfg.schedule(), |s| {
            let s = s.as_ref().expect("schedule section present");
            format!("{} values from {:e} to {:e}", s.values().len(), s.values()[0], s.min())
        });
    }
    if cfg.window.is_some() {
        check(&mut checks, "window", cfg.window(), |_| "inside the sector".into());
    }
    match cfg.contours() {
        Ok(contours) => {
            for (k, c) in contours.iter().enumerate() {
                check(&mut checks, &format!("contour {k}"), c.check_ray_clearance(theta, ESSENTIAL_MARGIN_DEFAULT), |_| {
                    format!("center {}, radius {}", c.center, c.radius)
                });
            }
        }
        Err(e) => checks.push(Check {
            name: "contours".into(),
            pass: false,
            detail: e.to_string(),
        }),
    }

    let pass = checks.iter().all(|c| c.pass);
    let record = ValidateRecord {
        metadata: Metadata::new("validate"),
        theta: theta.into(),
        beta0: cfg.profile.beta0,
        r: cfg.profile.r,
        cutoff,
        checks,
        pass,
    };
    let summary = record
        .checks
        .iter()
        .map(|c| format!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output {
        files: vec![("validate.json".into(), to_json(&record)?)],
        status: if pass { Status::Pass } else { Status::ConstraintFailure },
        summary,
    })
}

fn nearest(list: &[Complex64], z: Complex64) -> Option<Complex64> {
    list.iter().copied().min_by(|a, b| (a - z).norm().total_cmp(&(b - z).norm()))
}

fn spectrum(cfg: &RunConfig, want_svg: bool) -> Result<Output, CliError> {
    let profile = cfg.deformation()?;
    let potential = cfg.potential_spec(&profile)?;
    let grid = cfg.grid()?;
    let order = cfg.order()?;
    let tag = cfg.tag();
    let eps = cfg.operator.eps;
    let window = cfg.window()?;
    let chi = match (tag, cfg.chi) {
        (OperatorTag::HepsThetaMinusChiV, Some(c)) => Some(build_chi(&grid, c.t, c.width)?),
        (OperatorTag::HepsThetaMinusChiV, None) => {
            return Err(CliError::Config("the split operator needs a [chi] section".into()));
        }
        _ => None,
    };
    let m = assemble(tag, &grid, &profile, &potential, eps, chi.as_ref(), order)?;
    let spec = eig_dense(&m, &cfg.eig_options())?;
    let theta = spec.meta.theta;

    let in_window: Vec<usize> = match &window {
        Some(w) => (0..spec.len()).filter(|&k| w.contains(spec.eigenvalues[k], theta)).collect(),
        None => Vec::new(),
    };
    let davies = match (cfg.potential, cfg.operator.davies_tolerance) {
        (PotentialKind::Free, Some(tol)) if eps > 0.0 => {
            let rows: Vec<CompareRow> = davies_spectrum(eps, cfg.operator.davies_count)?
                .into_iter()
                .map(|e| CompareRow::new(e, nearest(&spec.eigenvalues, e), tol))
                .collect();
            let pass = rows.iter().all(|r| r.pass);
            Some(DaviesCheck { tolerance: tol, rows, pass })
        }
        _ => None,
    };
    let pass = davies.as_ref().is_none_or(|d| d.pass);
    let record = SpectrumRecord {
        metadata: Metadata::new("spectrum"),
        tag,
        theta: theta.into(),
        eps,
        n: grid.len(),
        l: grid.half_length(),
        order: order.as_int(),
        eigenvalues: spec
            .eigenvalues
            .iter()
            .zip(&spec.residuals)
            .map(|(z, &residual)| EigRow { re: z.re, im: z.im, residual })
            .collect(),
        window,
        in_window,
        davies,
    };
    let mut files = vec![("spectrum.json".into(), to_json(&record)?)];
    if want_svg {
        let title = format!("{tag:?}, theta = {theta}, eps = {eps}, N = {}", grid.len());
        files.push(("spectrum.svg".into(), svg::scatter(&title, &spec.eigenvalues, theta, window.as_ref()).into_bytes()));
    }
    let summary = format!(
        "{} eigenvalues, {} in window, max backward error {:.2e}{}",
        spec.len(),
        record.in_window.len(),
        spec.max_residual(),
        record.davies.as_ref().map_or(String::new(), |d| format!(", davies check {}", if d.pass { "passed" } else { "FAILED" }))
    );
    Ok(Output {
        files,
        status: status(pass),
        summary,
    })
}

struct SweepRun {
    result: SweepResult,
    record: SweepRecord,
}

fn run_configured_sweep(cfg: &RunConfig) -> Result<SweepRun, CliError> {
    let setup = cfg.sweep_setup()?;
    let schedule = cfg
        .schedule()?
        .ok_or_else(|| CliError::Config("this command needs a [schedule] section".into()))?;
    setup.grid.check_coverage(cfg.profile.r, Some(schedule.min()))?;
    let result = run_sweep(&setup, &schedule)?;

    let counting_wanted = cfg.schedule.as_ref().is_some_and(|s| s.counting);
    let mut counting = Vec::new();
    if counting_wanted {
        let h = assemble(OperatorTag::Htheta, &setup.grid, &setup.profile, &setup.potential, 0.0, None, setup.order)?;
        for c in cfg.contours()? {
            let m_theta = multiplicity_direct(h.entries.as_ref(), &c)?;
            counting.push(verify_counting(&result, &setup.window, c.center, c.radius, m_theta.re.round() as i64)?);
        }
    }
    let pass = counting.iter().all(|c| c.eps_prime.is_some());
    let tracks = result
        .tracks
        .iter()
        .map(|t| TrackSummary {
            track_id: t.track_id,
            extrapolated: t.fit_exponent.map(|_| t.extrapolated.into()),
            fit_exponent: t.fit_exponent,
            broken: t.broken,
            points: t
                .points
                .iter()
                .map(|p| PointRow {
                    eps: p.eps,
                    re: p.z.re,
                    im: p.z.im,
                    residual: p.residual,
                })
                .collect(),
        })
        .collect();
    let record = SweepRecord {
        metadata: Metadata::new("sweep"),
        theta: cfg.theta().into(),
        n: setup.grid.len(),
        l: setup.grid.half_length(),
        schedule: schedule.values().to_vec(),
        window: setup.window,
        tracks,
        breaks: result.breaks.clone(),
        bisections: result.bisections.clone(),
        counting,
        pass,
    };
    Ok(SweepRun { result, record })
}

fn tracks_csv(record: &SweepRecord) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["track_id", "eps", "re", "im", "residual"])?;
    for t in &record.tracks {
        for p in &t.points {
            w.write_record([
                t.track_id.to_string(),
                p.eps.to_string(),
                p.re.to_string(),
                p.im.to_string(),
                p.residual.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv: {e}")))
}

fn sweep(cfg: &RunConfig, want_svg: bool) -> Result<Output, CliError> {
    let run = run_configured_sweep(cfg)?;
    let rec = &run.record;
    let mut files = vec![("sweep.json".into(), to_json(rec)?), ("tracks.csv".into(), tracks_csv(rec)?)];
    if want_svg {
        let pts: Vec<Complex64> = run.result.tracks.iter().flat_map(|t| t.points.iter().map(|p| p.z)).collect();
        let title = format!("tracks, theta = {}, N = {}", cfg.theta(), rec.n);
        files.push(("sweep.svg".into(), svg::scatter(&title, &pts, cfg.theta(), Some(&rec.window)).into_bytes()));
    }
    let summary = rec
        .tracks
        .iter()
        .map(|t| match t.extrapolated {
            Some(z) => format!("track {}: {} points, extrapolated {:.8}{:+.8}i", t.track_id, t.points.len(), z.re, z.im),
            None => format!("track {}: {} points, no extrapolation", t.track_id, t.points.len()),
        })
        .chain(rec.counting.iter().map(|c| format!("counting at {}: m = {}, eps' = {:?}", c.center, c.m_theta, c.eps_prime)))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output {
        files,
        status: status(rec.pass),
        summary,
    })
}

fn multiplicity(cfg: &RunConfig) -> Result<Output, CliError> {
    let profile = cfg.deformation()?;
    let potential = cfg.potential_spec(&profile)?;
    let grid = cfg.grid()?;
    let order = cfg.order()?;
    let eps = cfg.operator.eps;
    let theta = cfg.theta();
    let tag = if eps > 0.0 { OperatorTag::HepsTheta } else { OperatorTag::Htheta };
    let contours = cfg.contours()?;
    if contours.is_empty() {
        return Err(CliError::Config("multiplicity needs at least one [[contour]]".into()));
    }
    let margin = cfg.window()?.map_or(ESSENTIAL_MARGIN_DEFAULT, |w| w.essential_margin);
    for c in &contours {
        c.check_ray_clearance(theta, margin)?;
    }
    let h = assemble(tag, &grid, &profile, &potential, eps, None, order)?;
    let brute = eig_dense(&h, &cfg.eig_options())?;
    for c in &contours {
        c.check_spectral_gap(&brute.eigenvalues)?;
    }
    let free = assemble(OperatorTag::HepsTheta, &grid, &profile, &PotentialSpec::free(potential.cone), eps, None, order)?;
    let v: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&x| potential.eval_complex(profile.phi(x).0))
        .collect::<capres_core::Result<_>>()?;
    let fixed = cfg.fixed_chi(&grid)?;
    let chi_cfg = cfg.chi;

    let rows: Vec<MultiplicityRow> = contours
        .par_iter()
        .map(|c: &ContourSpec| -> Result<MultiplicityRow, CliError> {
            let (chi, neumann) = match &fixed {
                Some(chi) => (chi.clone(), None),
                None => {
                    let (t0, width, step) = chi_cfg.map_or((1.0, 1.0, 0.5), |k| (k.t, k.width, k.step));
                    let sel = select_chi(free.entries.as_ref(), &v, &grid, c, t0, width, step)?;
                    (sel.chi, Some(sel.neumann_norm))
                }
            };
            let split = assemble(OperatorTag::HepsThetaMinusChiV, &grid, &profile, &potential, eps, Some(&chi), order)?;
            let chi_v = split.chi_v().ok_or_else(|| CliError::Numerical("split operator without cutoff".into()))?;
            let rep = multiplicity_report(h.entries.as_ref(), split.entries.as_ref(), &chi_v, c)?;
            let mut row = MultiplicityRow {
                center: rep.center.into(),
                radius: rep.radius,
                nodes: c.nodes,
                m_direct: rep.m_direct.into(),
                m_logderiv: rep.m_logderiv.into(),
                rounded: rep.rounded,
                gap: rep.gap,
                quadrature_gap: rep.quadrature_gap,
                brute_count: Some(c.count_inside(&brute.eigenvalues)),
                chi_t: chi.t,
                neumann_norm: neumann,
                pass: false,
            };
            row.pass = row.verdict();
            Ok(row)
        })
        .collect::<Result<_, _>>()?;

    let pass = rows.iter().all(|r| r.pass);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "contour at {}{:+}i r = {}: m_direct {:.6}, m_logderiv {:.6}, count {:?}, {}",
                r.center.re,
                r.center.im,
                r.radius,
                r.m_direct.re,
                r.m_logderiv.re,
                r.brute_count,
                if r.pass { "pass" } else { "FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let record = MultiplicityRecord {
        metadata: Metadata::new("multiplicity"),
        tag,
        theta: theta.into(),
        eps,
        n: grid.len(),
        l: grid.half_length(),
        contours: rows,
        pass,
    };
    Ok(Output {
        files: vec![("multiplicity.json".into(), to_json(&record)?)],
        status: status(pass),
        summary,
    })
}

fn oracle_values(cfg: &RunConfig) -> Result<(OracleResult, Option<[f64; 4]>), CliError> {
    if cfg.potential == PotentialKind::Free {
        let eps = cfg.operator.eps;
        if !(eps > 0.0) {
            return Err(CliError::Config("the free oracle needs operator.eps > 0".into()));
        }
        return Ok((davies_result(eps, cfg.operator.davies_count)?, None));
    }
    let region = cfg.k_region()?;
    let mut cache = match &cfg.oracle.cache {
        Some(path) => OracleCache::open(path)?,
        None => OracleCache::in_memory(),
    };
    let res = cache.find_resonances(&cfg.potential, &region)?;
    Ok((res, Some([region.re_min, region.re_max, region.im_min, region.im_max])))
}

fn oracle(cfg: &RunConfig) -> Result<Output, CliError> {
    let (res, k_region) = oracle_values(cfg)?;
    let record = OracleRecord {
        metadata: Metadata::new("oracle"),
        potential: cfg.potential,
        eps: (cfg.potential == PotentialKind::Free).then_some(cfg.operator.eps),
        k_region,
        values: res.values.iter().map(|&z| z.into()).collect(),
        k_values: res.k_values.iter().map(|&k| k.into()).collect(),
        method: res.method,
        certified_digits: res.certified_digits,
    };
    let summary = record
        .values
        .iter()
        .map(|z| format!("z = {:.12}{:+.12}i", z.re, z.im))
        .chain(std::iter::once(format!("certified digits: {}", res.certified_digits)))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output {
        files: vec![("oracle.json".into(), to_json(&record)?)],
        status: Status::Pass,
        summary,
    })
}

fn compare_csv(record: &CompareRecord) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "reference_re", "reference_im", "main_re", "main_im", "rel_error", "pass"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (k, r) in record.rows.iter().enumerate() {
        w.write_record([
            k.to_string(),
            r.reference.re.to_string(),
            r.reference.im.to_string(),
            opt(r.main.map(|m| m.re)),
            opt(r.main.map(|m| m.im)),
            opt(r.rel_error),
            r.pass.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv: {e}")))
}

fn compare(cfg: &RunConfig, want_svg: bool) -> Result<Output, CliError> {
    let tol = cfg.compare.tolerance;
    let theta = cfg.theta();
    let (reference, rows, main_points, window) = if cfg.potential == PotentialKind::Free {
        let profile = cfg.deformation()?;
        let potential = cfg.potential_spec(&profile)?;
        let grid = cfg.grid()?;
        let (oracle, _) = oracle_values(cfg)?;
        let m = assemble(cfg.tag(), &grid, &profile, &potential, cfg.operator.eps, None, cfg.order()?)?;
        let spec = eig_dense(&m, &cfg.eig_options())?;
        let rows: Vec<CompareRow> = oracle
            .values
            .iter()
            .map(|&e| CompareRow::new(e, nearest(&spec.eigenvalues, e), tol))
            .collect();
        ("davies", rows, spec.eigenvalues, cfg.window()?)
    } else {
        let (oracle, _) = oracle_values(cfg)?;
        let run = run_configured_sweep(cfg)?;
        let window = run.record.window;
        let limits: Vec<Complex64> = run.result.tracks.iter().map(|t| t.extrapolated).collect();
        let rows: Vec<CompareRow> = oracle
            .values
            .iter()
            .filter(|&&z| window.contains(z, theta))
            .map(|&z| CompareRow::new(z, nearest(&limits, z), tol))
            .collect();
        ("resonances", rows, limits, Some(window))
    };
    let pass = !rows.is_empty() && rows.iter().all(|r| r.pass);
    let record = CompareRecord {
        metadata: Metadata::new("compare"),
        potential: cfg.potential,
        theta: theta.into(),
        tolerance: tol,
        reference: reference.into(),
        rows,
        pass,
    };
    let mut files = vec![("compare.json".into(), to_json(&record)?), ("compare.csv".into(), compare_csv(&record)?)];
    if want_svg {
        let title = format!("main path vs {reference}, theta = {theta}");
        files.push(("compare.svg".into(), svg::scatter(&title, &main_points, theta, window.as_ref()).into_bytes()));
    }
    let summary = if record.rows.is_empty() {
        "no reference values inside the window".to_string()
    } else {
        record
            .rows
            .iter()
            .map(|r| {
                format!(
                    "reference {:.8}{:+.8}i: relative error {}, {}",
                    r.reference.re,
                    r.reference.im,
                    r.rel_error.map_or("n/a".into(), |e| format!("{e:.3e}")),
                    if r.pass { "pass" } else { "FAIL" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    Ok(Output {
        files,
        status: status(pass),
        summary,
    })
}
