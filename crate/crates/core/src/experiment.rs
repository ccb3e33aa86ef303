//! Experiment pipelines and their on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::analysis::convergence::{convergence_study, ConvergenceRecord, StudySetup};
use crate::analysis::envelope::{check_bracket, check_residual_signs, BracketCheck, ResidualCheck};
use crate::analysis::generation::{check_generation, critical_m0, fit_m0, generation_time, GenerationReport};
use crate::analysis::interface::{extract_level_curve, hausdorff, one_sided_sup_distance, LevelCurves};
use crate::bistable::{envelope_constants, f_bistable, solve_profile_bvp, standing_profile_second, ProfileTable};
use crate::config::{ExperimentKind, RunConfig};
use crate::diffuse::{make_initial_data, Admissibility, DiffuseSolver, DiffuseState, InitialData, Trajectory, GAMMA0_VERTICES};
use crate::error::{Error, Result};
use crate::grid::{fmt17, snapshot_to_csv, Grid, ScalarField};
use crate::shape::Shape;
use crate::sharp::{SharpSolver, SharpState};

/// Bound on the closed-form profile residual.
pub const PROFILE_RESIDUAL_TOL: f64 = 1e-12;
/// Bound on the gap between the boundary-value solution and the closed form.
pub const PROFILE_BVP_TOL: f64 = 1e-6;
/// Relative radius error allowed against the shrinking-circle law.
pub const RADIUS_REL_TOL: f64 = 0.01;
/// The shrinking-circle law is checked while `R >= RADIUS_FLOOR * R0`.
pub const RADIUS_FLOOR: f64 = 0.2;
/// Accepted range of the fitted interface-distance slope.
pub const SLOPE_RANGE: (f64, f64) = (0.7, 1.3);
/// Largest accepted ratio of the last to the first field gap.
pub const GAP_RATIO_MAX: f64 = 0.6;

/// One pass/fail verdict of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnderResolved { .. }
        | Error::InvalidParams(_)
        | Error::InvalidInitialData(_)
        | Error::InvalidGrid(_)
        | Error::ConstantsInfeasible(_)
        | Error::Json(_) => 2,
        _ => 3,
    }
}

struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, &text)
    }
}

/// Runs the pipeline selected by `cfg.kind`, writing artifacts under `out`.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut art = Artifacts::new(out)?;
    let checks = match cfg.kind {
        ExperimentKind::Profile => run_profile(cfg, &mut art)?,
        ExperimentKind::Diffuse => run_diffuse_kind(cfg, &mut art)?,
        ExperimentKind::Sharp => run_sharp_kind(cfg, &mut art)?,
        ExperimentKind::Compare => run_compare(cfg, &mut art)?,
        ExperimentKind::Generation => run_generation(cfg, &mut art)?,
        ExperimentKind::Convergence => run_convergence(cfg, &mut art)?,
    };
    art.json("checks.json", &checks)?;
    let manifest = json!({
        "config": serde_json::to_value(cfg)?,
        "versions": {
            "haptolab": env!("CARGO_PKG_VERSION"),
            "manifest": 1,
        },
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "files": art.files,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text).map_err(|e| Error::io(out.join("manifest.json"), e))?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        files: art.files,
        checks,
    })
}

fn csv_row(values: &[f64]) -> String {
    let mut s = values.iter().map(|&v| fmt17(v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ProfileReport {
    half_width: f64,
    intervals: usize,
    newton_iterations: usize,
    /// `max |U0'' + f(U0)|` of the closed form on the table nodes.
    closed_form_residual: f64,
    /// `max |U_bvp - U0|` on the table nodes.
    bvp_gap: f64,
}

fn run_profile(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let p = &cfg.profile_solve;
    let bvp = solve_profile_bvp(p.half_width, p.intervals)?;
    let closed = ProfileTable::closed_form(p.half_width, p.intervals);
    let residual = closed
        .z
        .iter()
        .zip(&closed.u)
        .map(|(&z, &u)| (standing_profile_second(z) + f_bistable(u)).abs())
        .fold(0.0, f64::max);
    let gap = bvp.u.iter().zip(&closed.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut csv = String::from("z,U0,U0_bvp\n");
    for k in 0..closed.z.len() {
        csv.push_str(&csv_row(&[closed.z[k], closed.u[k], bvp.u[k]]));
    }
    art.write("profile.csv", &csv)?;
    art.json(
        "profile_report.json",
        &ProfileReport {
            half_width: p.half_width,
            intervals: p.intervals,
            newton_iterations: bvp.newton_iterations,
            closed_form_residual: residual,
            bvp_gap: gap,
        },
    )?;
    Ok(vec![
        Check::new(
            "profile_residual",
            residual <= PROFILE_RESIDUAL_TOL,
            format!("max |U0'' + f(U0)| = {residual:e} (bound {PROFILE_RESIDUAL_TOL:e})"),
        ),
        Check::new(
            "profile_bvp",
            gap <= PROFILE_BVP_TOL,
            format!("max |U_bvp - U0| = {gap:e} (bound {PROFILE_BVP_TOL:e})"),
        ),
    ])
}

fn initial_data(cfg: &RunConfig, eps: f64, grid: Grid) -> Result<InitialData> {
    let data = make_initial_data(
        &cfg.shape,
        cfg.profile.width(eps),
        &cfg.v0,
        &cfg.m0,
        grid,
        Admissibility {
            c0: cfg.params.c0,
            d0: cfg.sharp.d0,
        },
    )?;
    cfg.params.validate_for(data.v0.max())?;
    Ok(data)
}

fn params_at(cfg: &RunConfig, eps: f64) -> crate::diffuse::HaptoParams {
    let mut p = cfg.params.clone();
    p.eps = eps;
    p
}

fn run_diffuse_trajectory(cfg: &RunConfig, eps: f64, grid: Grid, t_final: f64, times: &[f64]) -> Result<Trajectory<DiffuseState>> {
    let data = initial_data(cfg, eps, grid)?;
    DiffuseSolver::new(params_at(cfg, eps), grid)?.run(DiffuseState::from_initial(&data), t_final, times)
}

fn run_sharp_trajectory(cfg: &RunConfig, grid: Grid, t_final: f64, times: &[f64]) -> Result<Trajectory<SharpState>> {
    let gamma0 = cfg.shape.polyline(GAMMA0_VERTICES, grid)?;
    let v0 = cfg.v0.sample(grid);
    cfg.params.validate_for(v0.max())?;
    let s0 = SharpState::new(&gamma0, v0, cfg.m0.sample(grid), cfg.sharp.d0)?;
    let run = SharpSolver::new(cfg.params.clone(), cfg.sharp, grid)?.run(s0, t_final, times)?;
    Ok(run.trajectory)
}

fn level_curves(f: &ScalarField, level: f64) -> Option<LevelCurves> {
    extract_level_curve(f, level).ok()
}

fn write_interface(art: &mut Artifacts, k: usize, curves: &Option<LevelCurves>) -> Result<()> {
    if let Some(lc) = curves {
        art.write(&format!("snapshots/interface_{k:04}.csv"), &lc.curve.to_csv())?;
    }
    Ok(())
}

fn area_of(curves: &Option<LevelCurves>) -> (f64, f64) {
    match curves {
        Some(lc) => (lc.curve.area(), lc.components() as f64),
        None => (0.0, 0.0),
    }
}

fn run_diffuse_kind(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let eps = cfg.params.eps;
    let grid = cfg.grid_for(eps)?;
    let t_final = cfg.horizon()?;
    let traj = run_diffuse_trajectory(cfg, eps, grid, t_final, &cfg.snapshots.schedule(t_final))?;
    let mut csv = String::from("t,u_min,u_max,m_min,m_max,v_min,v_max,mass,interface_area,components\n");
    for (k, s) in traj.states.iter().enumerate() {
        let lc = level_curves(&s.u, 0.5);
        let (area, comps) = area_of(&lc);
        csv.push_str(&csv_row(&[
            s.t,
            s.u.min(),
            s.u.max(),
            s.m.min(),
            s.m.max(),
            s.v.min(),
            s.v.max(),
            s.u.integral(),
            area,
            comps,
        ]));
        if cfg.snapshots.write_fields {
            for (name, f) in [("u", &s.u), ("v", &s.v), ("m", &s.m)] {
                art.write(&format!("snapshots/{name}_{k:04}.csv"), &snapshot_to_csv(f, name, s.t))?;
            }
            write_interface(art, k, &lc)?;
        }
    }
    art.write("metrics.csv", &csv)?;
    Ok(Vec::new())
}

fn circle_radius(shape: &Shape) -> Option<f64> {
    match *shape {
        Shape::Circle { radius, .. } => Some(radius),
        Shape::Star { .. } => None,
    }
}

/// Radius table against `sqrt(R0^2 - 2 t)` and the worst relative error
/// while the exact radius stays above `RADIUS_FLOOR * R0`.
fn radius_table(r0: f64, rows: &[(f64, Vec<f64>)], names: &[&str]) -> (String, f64) {
    let mut csv = format!("t,{},oracle\n", names.join(","));
    let mut worst: f64 = 0.0;
    for (t, radii) in rows {
        let arg = r0 * r0 - 2.0 * t;
        let oracle = if arg > 0.0 { arg.sqrt() } else { 0.0 };
        let mut row = vec![*t];
        row.extend(radii);
        row.push(oracle);
        csv.push_str(&csv_row(&row));
        if oracle >= RADIUS_FLOOR * r0 {
            for r in radii {
                worst = worst.max(((r - oracle) / oracle).abs());
            }
        }
    }
    (csv, worst)
}

fn radius_check(worst: f64) -> Check {
    Check::new(
        "shrinking_circle",
        worst <= RADIUS_REL_TOL,
        format!("worst relative radius error {worst:e} (bound {RADIUS_REL_TOL})"),
    )
}

fn run_sharp_kind(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let grid = cfg.grid_for(cfg.params.eps)?;
    let t_final = cfg.horizon()?;
    let traj = run_sharp_trajectory(cfg, grid, t_final, &cfg.snapshots.schedule(t_final))?;
    let mut csv = String::from("t,area,equivalent_radius,length,components,m_max,v_min\n");
    let mut radii = Vec::new();
    for (k, s) in traj.states.iter().enumerate() {
        let lc = level_curves(&s.phi, 0.0);
        let (area, comps) = area_of(&lc);
        let (r, len) = lc
            .as_ref()
            .map_or((0.0, 0.0), |l| (l.curve.equivalent_radius(), l.curve.length()));
        radii.push((s.t, vec![r]));
        csv.push_str(&csv_row(&[s.t, area, r, len, comps, s.m.max(), s.v.min()]));
        if cfg.snapshots.write_fields {
            for (name, f) in [("phi", &s.phi), ("v", &s.v), ("m", &s.m)] {
                art.write(&format!("snapshots/{name}_{k:04}.csv"), &snapshot_to_csv(f, name, s.t))?;
            }
            write_interface(art, k, &lc)?;
        }
    }
    art.write("metrics.csv", &csv)?;
    let mut checks = Vec::new();
    if let (true, Some(r0)) = (cfg.params.chi.is_inert(), circle_radius(&cfg.shape)) {
        let (table, worst) = radius_table(r0, &radii, &["radius"]);
        art.write("radius.csv", &table)?;
        checks.push(radius_check(worst));
    }
    Ok(checks)
}

fn curve_set_distance(a: &LevelCurves, b: &LevelCurves) -> (f64, f64) {
    let one = |x: &LevelCurves, y: &LevelCurves| {
        x.all()
            .map(|c| y.all().map(|d| one_sided_sup_distance(c, d)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.components() == 1 && b.components() == 1 {
        let d = one_sided_sup_distance(&a.curve, &b.curve);
        return (d, hausdorff(&a.curve, &b.curve));
    }
    let d = one(a, b);
    (d, d.max(one(b, a)))
}

fn run_compare(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let eps = cfg.params.eps;
    let grid = cfg.grid_for(eps)?;
    let t_final = cfg.horizon()?;
    let times = cfg.snapshots.schedule(t_final);
    let diffuse = run_diffuse_trajectory(cfg, eps, grid, t_final, &times)?;
    let sharp = run_sharp_trajectory(cfg, grid, t_final, &times)?;
    if sharp.states.len() != diffuse.states.len() {
        return Err(Error::SolverFailure(format!(
            "sharp region vanished at t = {} before the end of the comparison",
            sharp.last().t
        )));
    }

    let mut csv = String::from("t,distance,hausdorff,v_gap,m_gap,diffuse_radius,sharp_radius\n");
    let mut radii = Vec::new();
    for (k, (d, s)) in diffuse.states.iter().zip(&sharp.states).enumerate() {
        let ld = level_curves(&d.u, 0.5);
        let ls = level_curves(&s.phi, 0.0);
        let (dist, haus) = match (&ld, &ls) {
            (Some(a), Some(b)) => curve_set_distance(a, b),
            _ => (f64::NAN, f64::NAN),
        };
        let rd = ld.as_ref().map_or(0.0, |l| l.curve.equivalent_radius());
        let rs = ls.as_ref().map_or(0.0, |l| l.curve.equivalent_radius());
        radii.push((d.t, vec![rs, rd]));
        csv.push_str(&csv_row(&[d.t, dist, haus, d.v.max_abs_diff(&s.v), d.m.max_abs_diff(&s.m), rd, rs]));
        if cfg.snapshots.write_fields {
            for (name, f) in [("u", &d.u), ("v_diffuse", &d.v), ("m_diffuse", &d.m), ("phi", &s.phi), ("v_sharp", &s.v), ("m_sharp", &s.m)] {
                art.write(&format!("snapshots/{name}_{k:04}.csv"), &snapshot_to_csv(f, name, d.t))?;
            }
            write_interface(art, k, &ld)?;
            if let Some(l) = &ls {
                art.write(&format!("snapshots/sharp_interface_{k:04}.csv"), &l.curve.to_csv())?;
            }
        }
    }
    art.write("comparison.csv", &csv)?;

    let mut checks = Vec::new();
    if let (true, Some(r0)) = (cfg.params.chi.is_inert(), circle_radius(&cfg.shape)) {
        let (table, worst) = radius_table(r0, &radii, &["sharp_radius", "diffuse_radius"]);
        art.write("radius.csv", &table)?;
        checks.push(radius_check(worst));
    }
    if let Some(env) = &cfg.envelope {
        checks.extend(envelope_checks(cfg, env, &diffuse, &sharp, t_final, art)?);
    }
    Ok(checks)
}

/// Envelope results of a comparison run.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub bracket: Vec<BracketCheck>,
    pub residual: Vec<ResidualCheck>,
}

/// Checks the diffuse solution against the envelopes built on the sharp
/// distance, and the operator signs on the envelopes.
pub fn envelope_report(
    cfg: &RunConfig,
    env: &crate::config::EnvelopeSpec,
    diffuse: &Trajectory<DiffuseState>,
    sharp: &Trajectory<SharpState>,
    t_final: f64,
) -> Result<(crate::bistable::EnvelopeConstants, EnvelopeReport)> {
    let eps = cfg.params.eps;
    let c = envelope_constants(t_final, cfg.sharp.d0, env.eps0, env.k)?;
    if eps > c.eps0 {
        return Err(Error::Config(format!("eps = {eps} exceeds the admissible eps0 = {}", c.eps0)));
    }
    let mut bracket = Vec::new();
    for (d, s) in diffuse.states.iter().zip(&sharp.states) {
        bracket.push(check_bracket(&d.u, &s.phi, d.t, eps, &c, env.bracket_slack)?);
    }
    let mut residual = Vec::new();
    for k in 1..sharp.states.len() {
        let (a, b) = (&sharp.states[k - 1], &sharp.states[k]);
        let v = diffuse.states[k - 1].v.zip_map(&diffuse.states[k].v, |x, y| 0.5 * (x + y));
        residual.push(check_residual_signs((a.t, &a.phi), (b.t, &b.phi), &v, &cfg.params.chi, eps, &c, env.residual_band)?);
    }
    Ok((c, EnvelopeReport { bracket, residual }))
}

fn envelope_checks(
    cfg: &RunConfig,
    env: &crate::config::EnvelopeSpec,
    diffuse: &Trajectory<DiffuseState>,
    sharp: &Trajectory<SharpState>,
    t_final: f64,
    art: &mut Artifacts,
) -> Result<Vec<Check>> {
    let (c, report) = envelope_report(cfg, env, diffuse, sharp, t_final)?;
    art.json("envelope_constants.json", &c)?;
    let mut csv = String::from("t,q,slack,excess_upper,excess_lower,violations\n");
    for b in &report.bracket {
        csv.push_str(&csv_row(&[b.t, b.q, b.slack, b.excess_upper, b.excess_lower, b.violations as f64]));
    }
    art.write("bracket.csv", &csv)?;
    let mut csv = String::from("t,tol,points,min_upper,max_lower,violations\n");
    for r in &report.residual {
        csv.push_str(&csv_row(&[r.t, r.tol, r.points as f64, r.min_upper, r.max_lower, r.violations as f64]));
    }
    art.write("residual.csv", &csv)?;
    art.json("envelope_report.json", &report)?;
    let bracket_bad: usize = report.bracket.iter().map(|b| b.violations).sum();
    let residual_bad: usize = report.residual.iter().map(|r| r.violations).sum();
    let worst_excess = report
        .bracket
        .iter()
        .map(|b| b.excess_upper.max(b.excess_lower) - b.slack)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Check::new(
            "envelope_bracket",
            bracket_bad == 0,
            format!("{bracket_bad} violations; largest excess over slack {worst_excess:e}"),
        ),
        Check::new(
            "envelope_residual_signs",
            residual_bad == 0,
            format!("{residual_bad} sign violations over {} intervals", report.residual.len()),
        ),
    ])
}

#[derive(Serialize)]
struct GenerationRun {
    report: GenerationReport,
    #[serde(rename = "critical_M0")]
    critical_m0: f64,
}

fn run_generation(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let spec = &cfg.generation;
    let mut m0 = spec.m0;
    let fitted = m0.is_none();
    let mut runs = Vec::new();
    let mut csv = String::from("eps,t_star,violations_a,violations_b,u_sup,u_inf,critical_M0\n");
    for eps in cfg.eps_values() {
        let grid = cfg.domain.resolving(eps / 4.0)?;
        let ts = generation_time(eps);
        let traj = run_diffuse_trajectory(cfg, eps, grid, ts, &[ts])?;
        let m = match m0 {
            Some(m) => m,
            None => *m0.insert(fit_m0(&traj, eps, spec.eta, spec.m0_step)?),
        };
        let report = check_generation(&traj, eps, spec.eta, m)?;
        let critical = critical_m0(&traj, eps, spec.eta)?;
        csv.push_str(&csv_row(&[
            eps,
            report.t_star,
            report.violations_a as f64,
            report.violations_b as f64,
            report.u_sup,
            report.u_inf,
            critical,
        ]));
        runs.push(GenerationRun {
            report,
            critical_m0: critical,
        });
    }
    art.write("generation.csv", &csv)?;
    art.json(
        "generation.json",
        &json!({
            "M0": m0,
            "fitted": fitted,
            "eta": spec.eta,
            "runs": runs,
        }),
    )?;
    Ok(runs
        .iter()
        .map(|r| {
            Check::new(
                &format!("generation_eps_{}", r.report.eps),
                r.report.passed(),
                format!(
                    "violations (a) {} (b) {} at t* = {:e} with M0 = {}",
                    r.report.violations_a, r.report.violations_b, r.report.t_star, r.report.m0
                ),
            )
        })
        .collect())
}

/// Convergence setup described by a configuration.
pub fn study_setup(cfg: &RunConfig) -> Result<StudySetup> {
    let eps = cfg.eps_values();
    let finest = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let sharp_cells = match cfg.sharp_cells {
        Some(n) => n,
        None => cfg.domain.resolving(finest / 4.0)?.nx,
    };
    Ok(StudySetup {
        domain: cfg.domain,
        params: cfg.params.clone(),
        shape: cfg.shape.clone(),
        profile: cfg.profile,
        v0: cfg.v0.clone(),
        m0: cfg.m0.clone(),
        t_final: cfg.horizon()?,
        snapshot_times: cfg.snapshots.schedule(cfg.horizon()?),
        sharp: cfg.sharp,
        sharp_cells,
    })
}

/// Slope and gap verdicts of a convergence record.
pub fn convergence_checks(rec: &ConvergenceRecord) -> Vec<Check> {
    let s = rec.distance_fit.slope;
    let mut checks = vec![Check::new(
        "interface_distance_slope",
        s >= SLOPE_RANGE.0 && s <= SLOPE_RANGE.1,
        format!(
            "fitted slope {s:.4} (range [{}, {}]), C = {:.4}, distances {:?}",
            SLOPE_RANGE.0, SLOPE_RANGE.1, rec.distance_fit.constant, rec.distance
        ),
    )];
    for (name, gaps) in [("m_gap", &rec.m_gap), ("v_gap", &rec.v_gap)] {
        let ratio = gaps.last().copied().unwrap_or(f64::NAN) / gaps.first().copied().unwrap_or(f64::NAN);
        checks.push(Check::new(
            name,
            ConvergenceRecord::decreasing(gaps) && ratio <= GAP_RATIO_MAX,
            format!("gaps {gaps:?}, last/first {ratio:.4} (bound {GAP_RATIO_MAX})"),
        ));
    }
    checks
}

fn run_convergence(cfg: &RunConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let setup = study_setup(cfg)?;
    let rec = convergence_study(&setup, &cfg.eps_values())?;
    art.json("convergence.json", &rec)?;
    let mut csv = String::from("eps,h,distance,v_gap,m_gap\n");
    for (k, run) in rec.runs.iter().enumerate() {
        csv.push_str(&csv_row(&[run.eps, run.h, rec.distance[k], rec.v_gap[k], rec.m_gap[k]]));
        art.write(&format!("eps_{}.csv", run.eps), &run.to_csv())?;
    }
    art.write("convergence.csv", &csv)?;
    Ok(convergence_checks(&rec))
}

/// One line per check, for logs.
pub fn summarize(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}
