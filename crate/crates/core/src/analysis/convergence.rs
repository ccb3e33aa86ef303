//! Diffuse runs at decreasing `eps` against one sharp-interface run.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::interface::{extract_level_curve, one_sided_to_index};
use crate::curve::SegmentIndex;
use crate::diffuse::{make_initial_data, Admissibility, DiffuseSolver, DiffuseState, HaptoParams, ProfileSpec, GAMMA0_VERTICES};
use crate::error::{Error, Result};
use crate::grid::{fmt17, interpolate_cubic, Domain, Grid, ScalarField};
use crate::shape::{FieldSpec, Shape};
use crate::sharp::{SharpConfig, SharpSolver, SharpState};

/// Data shared by every run of a study. `params.eps` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySetup {
    pub domain: Domain,
    pub params: HaptoParams,
    pub shape: Shape,
    pub profile: ProfileSpec,
    pub v0: FieldSpec,
    pub m0: FieldSpec,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub sharp: SharpConfig,
    /// Cells across the domain width for the sharp run.
    pub sharp_cells: usize,
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// `exp` of the intercept, so `y ~ constant * x^slope`.
    pub constant: f64,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "log-log fit needs two or more paired samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParams("log-log fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParams("log-log fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        constant: (my - slope * mx).exp(),
    })
}

/// Metrics of one diffuse run at one snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub t: f64,
    /// Largest distance from the diffuse half-level curve to the sharp interface.
    pub distance: f64,
    pub hausdorff: f64,
    pub v_gap: f64,
    pub m_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub eps: f64,
    pub h: f64,
    pub samples: Vec<GapSample>,
}

impl EpsRun {
    fn sup(&self, f: impl Fn(&GapSample) -> f64) -> f64 {
        self.samples.iter().map(f).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self) -> f64 {
        self.sup(|s| s.distance)
    }

    pub fn sup_v_gap(&self) -> f64 {
        self.sup(|s| s.v_gap)
    }

    pub fn sup_m_gap(&self) -> f64 {
        self.sup(|s| s.m_gap)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,distance,hausdorff,v_gap,m_gap\n");
        for g in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt17(g.t),
                fmt17(g.distance),
                fmt17(g.hausdorff),
                fmt17(g.v_gap),
                fmt17(g.m_gap)
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub eps: Vec<f64>,
    /// Sup over snapshot times of the one-sided interface distance.
    pub distance: Vec<f64>,
    pub v_gap: Vec<f64>,
    pub m_gap: Vec<f64>,
    pub distance_fit: LogLogFit,
    pub v_fit: LogLogFit,
    pub m_fit: LogLogFit,
    pub runs: Vec<EpsRun>,
}

impl ConvergenceRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// Whether `series` decreases strictly along the eps list.
    pub fn decreasing(series: &[f64]) -> bool {
        series.windows(2).all(|w| w[1] < w[0])
    }
}

/// Checks that `eps_list` decreases strictly and returns the diffuse grid for
/// each entry, with `h <= eps / 4`.
pub fn study_grids(domain: &Domain, eps_list: &[f64]) -> Result<Vec<Grid>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParams("eps list is empty".into()));
    }
    if !eps_list.windows(2).all(|w| w[1] < w[0]) || !eps_list.iter().all(|&e| e > 0.0) {
        return Err(Error::InvalidParams(format!("eps list must be positive and strictly decreasing, got {eps_list:?}")));
    }
    eps_list.iter().map(|&e| domain.resolving(e / 4.0)).collect()
}

/// Samples `f` at the cell centers of `target` by bicubic interpolation, so
/// smooth fields transfer with an error far below the grid spacing.
pub fn transfer(f: &ScalarField, target: Grid) -> Result<ScalarField> {
    if f.grid.same_shape(&target) {
        return Ok(f.clone());
    }
    let mut values = Vec::with_capacity(target.len());
    for j in 0..target.ny {
        for i in 0..target.nx {
            values.push(interpolate_cubic(f, target.center(i, j))?.0);
        }
    }
    ScalarField::from_values(target, values)
}

/// Runs the sharp solver once and the diffuse solver at each `eps`, comparing
/// them at every snapshot time.
pub fn convergence_study(setup: &StudySetup, eps_list: &[f64]) -> Result<ConvergenceRecord> {
    let grids = study_grids(&setup.domain, eps_list)?;
    let sharp_grid = setup.domain.grid(setup.sharp_cells)?;
    let gamma0 = setup.shape.polyline(GAMMA0_VERTICES, sharp_grid)?;
    let s0 = SharpState::new(
        &gamma0,
        setup.v0.sample(sharp_grid),
        setup.m0.sample(sharp_grid),
        setup.sharp.d0,
    )?;
    let mut sharp_params = setup.params.clone();
    sharp_params.eps = eps_list[0];
    let sharp = SharpSolver::new(sharp_params, setup.sharp, sharp_grid)?.run(s0, setup.t_final, &setup.snapshot_times)?;
    if let Some(t) = sharp.extinct_at {
        return Err(Error::SolverFailure(format!("sharp region vanished at t = {t}, before the end of the study")));
    }
    let mut sharp_curves = Vec::with_capacity(sharp.trajectory.states.len());
    for s in &sharp.trajectory.states {
        let lc = s.interface()?;
        let idx = SegmentIndex::new(&lc.all().collect::<Vec<_>>());
        sharp_curves.push((s.t, idx, lc));
    }

    let mut runs = Vec::with_capacity(eps_list.len());
    for (&eps, &grid) in eps_list.iter().zip(&grids) {
        let mut params = setup.params.clone();
        params.eps = eps;
        let data = make_initial_data(
            &setup.shape,
            setup.profile.width(eps),
            &setup.v0,
            &setup.m0,
            grid,
            Admissibility {
                c0: params.c0,
                d0: setup.sharp.d0,
            },
        )?;
        let traj = DiffuseSolver::new(params, grid)?.run(
            DiffuseState::from_initial(&data),
            setup.t_final,
            &setup.snapshot_times,
        )?;
        let mut samples = Vec::with_capacity(traj.states.len());
        for ((t, idx, lc), s_sharp) in sharp_curves.iter().zip(&sharp.trajectory.states) {
            let d = traj.at(*t)?;
            let diffuse = extract_level_curve(&d.u, 0.5)?;
            let d_idx = SegmentIndex::new(&diffuse.all().collect::<Vec<_>>());
            let distance = diffuse.all().map(|c| one_sided_to_index(c, idx)).fold(0.0, f64::max);
            let back = lc.all().map(|c| one_sided_to_index(c, &d_idx)).fold(0.0, f64::max);
            let v_ref = transfer(&s_sharp.v, grid)?;
            let m_ref = transfer(&s_sharp.m, grid)?;
            samples.push(GapSample {
                t: *t,
                distance,
                hausdorff: distance.max(back),
                v_gap: d.v.max_abs_diff(&v_ref),
                m_gap: d.m.max_abs_diff(&m_ref),
            });
        }
        runs.push(EpsRun {
            eps,
            h: grid.h,
            samples,
        });
    }

    let distance: Vec<f64> = runs.iter().map(EpsRun::sup_distance).collect();
    let v_gap: Vec<f64> = runs.iter().map(EpsRun::sup_v_gap).collect();
    let m_gap: Vec<f64> = runs.iter().map(EpsRun::sup_m_gap).collect();
    let fit = |y: &[f64]| {
        if eps_list.len() >= 2 {
            fit_loglog(eps_list, y)
        } else {
            Ok(LogLogFit {
                slope: f64::NAN,
                constant: f64::NAN,
            })
        }
    };
    Ok(ConvergenceRecord {
        eps: eps_list.to_vec(),
        distance_fit: fit(&distance)?,
        v_fit: fit(&v_gap)?,
        m_fit: fit(&m_gap)?,
        distance,
        v_gap,
        m_gap,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_power_laws() {
        let x = [0.04, 0.02, 0.01];
        let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powf(1.2)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 1.2).abs() < 1e-12);
        assert!((f.constant - 3.0).abs() < 1e-12);
        assert!(fit_loglog(&x[..1], &y[..1]).is_err());
        assert!(fit_loglog(&x, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn grids_resolve_each_eps() {
        let d = Domain::default();
        let g = study_grids(&d, &[0.04, 0.02, 0.01]).unwrap();
        assert_eq!(g.iter().map(|g| g.nx).collect::<Vec<_>>(), vec![100, 200, 400]);
        for (gr, e) in g.iter().zip([0.04, 0.02, 0.01]) {
            assert!(gr.h <= e / 4.0 * (1.0 + 1e-12));
        }
        assert!(study_grids(&d, &[0.02, 0.04]).is_err());
        assert!(study_grids(&d, &[]).is_err());
    }

    #[test]
    fn transfer_is_exact_for_cubics_and_accurate_for_smooth_fields() {
        let cubic = |x: f64, y: f64| x * x * x - 2.0 * x * y + y * y;
        let fine = ScalarField::from_fn(Grid::unit_square(32).unwrap(), cubic);
        for n in [16, 12] {
            let target = Grid::unit_square(n).unwrap();
            let r = transfer(&fine, target).unwrap();
            let inner: f64 = (2..n - 2)
                .flat_map(|j| (2..n - 2).map(move |i| (i, j)))
                .map(|(i, j)| {
                    let c = target.center(i, j);
                    (r.at(i, j) - cubic(c[0], c[1])).abs()
                })
                .fold(0.0, f64::max);
            assert!(inner < 1e-12, "{inner}");
        }
        let wave = |x: f64, y: f64| (std::f64::consts::PI * 2.0 * x).cos() * (std::f64::consts::PI * 2.0 * y).cos();
        let coarse = Grid::unit_square(25).unwrap();
        let r = transfer(&ScalarField::from_fn(Grid::unit_square(100).unwrap(), wave), coarse).unwrap();
        assert!(r.max_abs_diff(&ScalarField::from_fn(coarse, wave)) < 1e-5);
    }

    #[test]
    fn study_runs_on_a_coarse_setup() {
        let setup = StudySetup {
            domain: Domain::default(),
            params: HaptoParams {
                eps: 0.2,
                lambda: 1.0,
                alpha: 0.1,
                chi: crate::bistable::ChiSpec::Linear { coef: 0.5 },
                c0: 1000.0,
            },
            shape: Shape::Circle {
                center: [0.5, 0.5],
                radius: 0.25,
            },
            profile: ProfileSpec::WellPrepared,
            v0: FieldSpec::constant(1.0).with_mode(2, 2, 0.2),
            m0: FieldSpec::constant(0.0),
            t_final: 0.002,
            snapshot_times: vec![0.001],
            sharp: SharpConfig {
                d0: 0.05,
                redistance_every: 5,
            },
            sharp_cells: 64,
        };
        let rec = convergence_study(&setup, &[0.16, 0.08]).unwrap();
        assert_eq!(rec.runs.len(), 2);
        assert_eq!(rec.runs[0].samples.len(), 3);
        assert!(rec.distance.iter().all(|&d| d > 0.0));
        assert!(rec.distance_fit.slope.is_finite());
        for run in &rec.runs {
            assert!(run.to_csv().lines().count() == 4);
        }
    }
}
