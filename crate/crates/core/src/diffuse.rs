//! Time integration of the diffuse-interface system
//!
//! ```text
//! u_t = Lap u - div(u grad chi(v)) + f(u) / eps^2
//! v_t = -lambda m v
//! m_t = alpha Lap m + u - m
//! ```
//!
//! with homogeneous Neumann walls.

use serde::{Deserialize, Serialize};

use crate::bistable::{f_bistable, ChiSpec};
use crate::curve::InterfaceCurve;
use crate::error::{Error, Result};
use crate::grid::{
    advective_divergence_into, gradient_centered, gradient_centered_into, laplacian_neumann,
    laplacian_neumann_into, Grid, ScalarField,
};
use crate::linalg::{HelmholtzSolver, SolveStats};
use crate::shape::{FieldSpec, Shape};

/// Slack on the a priori bounds checked after every step.
pub const BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaptoParams {
    pub eps: f64,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(default)]
    pub chi: ChiSpec,
    #[serde(rename = "C0")]
    pub c0: f64,
}

impl HaptoParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.eps) && ok(self.lambda) && ok(self.alpha)) {
            return Err(Error::InvalidParams(format!(
                "eps, lambda and alpha must be positive (got {}, {}, {})",
                self.eps, self.lambda, self.alpha
            )));
        }
        if !(self.c0.is_finite() && self.c0 > 1.0) {
            return Err(Error::InvalidParams(format!("C0 must exceed 1, got {}", self.c0)));
        }
        Ok(())
    }

    /// Validates the parameters and `chi` on `(0, v_max]`.
    pub fn validate_for(&self, v_max: f64) -> Result<()> {
        self.validate()?;
        self.chi.validate(v_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffuseState {
    pub u: ScalarField,
    pub v: ScalarField,
    pub m: ScalarField,
    pub int_m: ScalarField,
    /// Initial ECM density; `v = v0 exp(-lambda int_m)`.
    pub v0: ScalarField,
    pub t: f64,
}

impl DiffuseState {
    pub fn new(u: ScalarField, v0: ScalarField, m: ScalarField) -> Result<Self> {
        let g = u.grid;
        for f in [&v0, &m] {
            if !f.grid.same_shape(&g) {
                return Err(Error::ShapeMismatch {
                    expected: g.len(),
                    got: f.grid.len(),
                });
            }
        }
        Ok(Self {
            v: v0.clone(),
            int_m: ScalarField::zeros(g),
            u,
            m,
            v0,
            t: 0.0,
        })
    }

    pub fn from_initial(data: &InitialData) -> Self {
        Self {
            u: data.u0.clone(),
            v: data.v0.clone(),
            m: data.m0.clone(),
            int_m: ScalarField::zeros(data.u0.grid),
            v0: data.v0.clone(),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid
    }

    /// Checks `0 <= u, m <= C0` and `0 <= v <= v0` within [`BOUND_TOL`].
    pub fn check_bounds(&self, c0: f64) -> Result<()> {
        let check = |name: &str, f: &ScalarField| -> Result<()> {
            let (lo, hi) = (f.min(), f.max());
            if !(lo >= -BOUND_TOL && hi <= c0 + BOUND_TOL) {
                return Err(Error::StabilityViolation {
                    t: self.t,
                    detail: format!("{name} left [0, C0]: range [{lo}, {hi}]"),
                });
            }
            Ok(())
        };
        check("u", &self.u)?;
        check("m", &self.m)?;
        for (v, v0) in self.v.values.iter().zip(&self.v0.values) {
            if !(*v >= 0.0 && *v <= v0 + BOUND_TOL) {
                return Err(Error::StabilityViolation {
                    t: self.t,
                    detail: format!("v = {v} outside [0, v0 = {v0}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: ScalarField,
    pub v0: ScalarField,
    pub m0: ScalarField,
    /// The half-level curve of `u0`, sampled from the exact shape.
    pub gamma0: InterfaceCurve,
}

/// Bounds the initial data must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub c0: f64,
    /// Wall margin unit: the interface must stay `4 d0` from the walls.
    pub d0: f64,
}

/// Vertex count of the sampled initial interface.
pub const GAMMA0_VERTICES: usize = 4096;

/// Discrete `C^2` proxy: `sup|f| + sup|grad f| + sup|Lap f|`.
pub fn c2_proxy(f: &ScalarField) -> f64 {
    let g = gradient_centered(f);
    f.sup_norm() + g.max_norm() + laplacian_neumann(f).sup_norm()
}

/// Number of 4-connected components of `mask`, and whether any touches the
/// outermost cell ring.
pub fn mask_components(grid: Grid, mask: &[bool]) -> (usize, bool) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut touches = false;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
                touches = true;
            }
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }
    }
    (count, touches)
}

/// Transition width of the initial cell density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `u0 = U0(d / eps)`, the standing wave at the current `eps`.
    WellPrepared,
    /// `u0 = 1 / (1 + exp(d / width))` for every `eps`.
    Fixed { width: f64 },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::WellPrepared
    }
}

impl ProfileSpec {
    /// Width argument of [`make_initial_data`].
    pub fn width(&self, eps: f64) -> f64 {
        match *self {
            ProfileSpec::WellPrepared => std::f64::consts::SQRT_2 * eps,
            ProfileSpec::Fixed { width } => width,
        }
    }
}

/// Builds `u0 = 1 / (1 + exp(d(x) / width))` from the signed distance `d` to
/// `shape` (negative inside), with `v0` and `m0` sampled from their specs.
pub fn make_initial_data(
    shape: &Shape,
    width: f64,
    v0_spec: &FieldSpec,
    m0_spec: &FieldSpec,
    grid: Grid,
    limits: Admissibility,
) -> Result<InitialData> {
    shape.validate()?;
    if !(width > 0.0) {
        return Err(Error::InvalidInitialData(format!("profile width must be positive, got {width}")));
    }
    let clearance = shape.wall_clearance(&grid);
    if clearance < 4.0 * limits.d0 {
        return Err(Error::InvalidInitialData(format!(
            "interface clearance {clearance} to the walls is below 4 d0 = {}",
            4.0 * limits.d0
        )));
    }
    if !v0_spec.is_neumann_compatible() {
        return Err(Error::InvalidInitialData(
            "v0 must be built from cosine modes only (zero normal derivative at the walls)".into(),
        ));
    }
    let u0 = ScalarField::from_fn(grid, |x, y| {
        crate::bistable::standing_profile(shape.signed_distance([x, y]) / width * std::f64::consts::SQRT_2)
    });
    let v0 = v0_spec.sample(grid);
    let m0 = m0_spec.sample(grid);
    for (name, f) in [("v0", &v0), ("m0", &m0)] {
        if f.min() < 0.0 {
            return Err(Error::InvalidInitialData(format!("{name} must be nonnegative, min {}", f.min())));
        }
    }
    if !(v0.min() > 0.0) {
        return Err(Error::InvalidInitialData("v0 must be positive".into()));
    }
    for (name, f) in [("u0", &u0), ("v0", &v0), ("m0", &m0)] {
        let c2 = c2_proxy(f);
        if !(c2 <= limits.c0) {
            return Err(Error::InvalidInitialData(format!(
                "discrete C2 size of {name} is {c2}, above C0 = {}",
                limits.c0
            )));
        }
    }
    let mask: Vec<bool> = u0.values.iter().map(|&u| u > 0.5).collect();
    let (components, touches) = mask_components(grid, &mask);
    if components != 1 || touches {
        return Err(Error::InvalidInitialData(format!(
            "{{u0 > 1/2}} must be one component away from the walls (components: {components}, touches wall: {touches})"
        )));
    }
    let gamma0 = shape.polyline(GAMMA0_VERTICES, grid)?;
    Ok(InitialData { u0, v0, m0, gamma0 })
}

/// Backward-Euler stepper for the `(v, m)` subsystem with a prescribed cell
/// density, shared by both solvers.
#[derive(Debug, Clone)]
pub struct EcmStepper {
    grid: Grid,
    helm: HelmholtzSolver,
    lap: Vec<f64>,
    rhs: Vec<f64>,
    m_new: Vec<f64>,
}

impl EcmStepper {
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            helm: HelmholtzSolver::new(grid),
            lap: vec![0.0; n],
            rhs: vec![0.0; n],
            m_new: vec![0.0; n],
        }
    }

    /// Advances `m` by `(1 + dt) m' - dt alpha Lap m' = m + dt u`, accumulates
    /// `int_m` by the trapezoid rule and rebuilds `v = v0 exp(-lambda int_m)`.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        u: &[f64],
        v0: &[f64],
        m: &mut [f64],
        int_m: &mut [f64],
        v: &mut [f64],
        lambda: f64,
        alpha: f64,
        dt: f64,
    ) -> Result<SolveStats> {
        laplacian_neumann_into(m, self.grid, &mut self.lap);
        for k in 0..m.len() {
            self.rhs[k] = m[k] + dt * u[k];
            self.m_new[k] = m[k] + dt * (alpha * self.lap[k] + u[k] - m[k]);
        }
        let stats = self.helm.solve(1.0 + dt, dt * alpha, &self.rhs, &mut self.m_new)?;
        for k in 0..m.len() {
            // Clamped so v is exactly nonincreasing even at solver round-off.
            int_m[k] += (0.5 * dt * (m[k] + self.m_new[k])).max(0.0);
            m[k] = self.m_new[k];
            v[k] = v0[k] * (-lambda * int_m[k]).exp();
        }
        Ok(stats)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub dt: f64,
    pub cg_iterations: usize,
}

/// Owns scratch storage for repeated steps on one grid.
#[derive(Debug, Clone)]
pub struct DiffuseSolver {
    pub params: HaptoParams,
    grid: Grid,
    reaction: bool,
    ecm: EcmStepper,
    chi_v: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    lap: Vec<f64>,
    adv: Vec<f64>,
    u_start: Vec<f64>,
}

impl DiffuseSolver {
    pub fn new(params: HaptoParams, grid: Grid) -> Result<Self> {
        params.validate()?;
        let n = grid.len();
        Ok(Self {
            params,
            grid,
            reaction: true,
            ecm: EcmStepper::new(grid),
            chi_v: vec![0.0; n],
            wx: vec![0.0; n],
            wy: vec![0.0; n],
            lap: vec![0.0; n],
            adv: vec![0.0; n],
            u_start: vec![0.0; n],
        })
    }

    /// Disables the bistable reaction (pure transport runs).
    pub fn with_reaction(mut self, on: bool) -> Self {
        self.reaction = on;
        self
    }

    fn load_drift(&mut self, v: &ScalarField) -> f64 {
        for (c, &vk) in self.chi_v.iter_mut().zip(&v.values) {
            *c = self.params.chi.value(vk);
        }
        gradient_centered_into(&self.chi_v, self.grid, &mut self.wx, &mut self.wy);
        self.wx
            .iter()
            .zip(&self.wy)
            .fold(0.0f64, |a, (x, y)| a.max(x.hypot(*y)))
    }

    fn bound_for(&self, drift: f64) -> f64 {
        let h = self.grid.h;
        let eps = self.params.eps;
        let mut dt = (h * h / 8.0).min(eps * eps / 10.0);
        if drift > 0.0 {
            dt = dt.min(h / (4.0 * drift));
        }
        dt
    }

    /// `min(h^2/8, eps^2/10, h / (4 max|grad chi(v)|))` for the state.
    pub fn dt_max(&mut self, s: &DiffuseState) -> f64 {
        let drift = self.load_drift(&s.v);
        self.bound_for(drift)
    }

    fn react(&self, u: &mut [f64], dt: f64) {
        if !self.reaction || dt <= 0.0 {
            return;
        }
        let inv = 1.0 / (self.params.eps * self.params.eps);
        let max_sub = self.params.eps * self.params.eps / 20.0;
        let n = (dt / max_sub).ceil().max(1.0) as usize;
        let hs = dt / n as f64;
        let rate = |x: f64| f_bistable(x) * inv;
        for x in u.iter_mut() {
            let mut y = *x;
            for _ in 0..n {
                let k1 = rate(y);
                let k2 = rate(y + 0.5 * hs * k1);
                let k3 = rate(y + 0.5 * hs * k2);
                let k4 = rate(y + hs * k3);
                y += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            *x = y;
        }
    }

    /// One Strang-split step: reaction half step, transport of `u` with the
    /// ECM update, reaction half step.
    pub fn step(&mut self, s: &mut DiffuseState, dt: f64) -> Result<StepStats> {
        let g = self.grid;
        if !s.u.grid.same_shape(&g) {
            return Err(Error::ShapeMismatch {
                expected: g.len(),
                got: s.u.grid.len(),
            });
        }
        let drift = self.load_drift(&s.v);
        let dt_max = self.bound_for(drift);
        if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::TimeStepTooLarge { dt, dt_max });
        }
        self.u_start.copy_from_slice(&s.u.values);

        self.react(&mut s.u.values, 0.5 * dt);
        laplacian_neumann_into(&s.u.values, g, &mut self.lap);
        advective_divergence_into(&s.u.values, &self.wx, &self.wy, g, &mut self.adv);
        for k in 0..g.len() {
            s.u.values[k] += dt * (self.lap[k] - self.adv[k]);
        }
        let p = &self.params;
        let stats = self.ecm.advance(
            &self.u_start,
            &s.v0.values,
            &mut s.m.values,
            &mut s.int_m.values,
            &mut s.v.values,
            p.lambda,
            p.alpha,
            dt,
        )?;
        self.react(&mut s.u.values, 0.5 * dt);
        s.t += dt;

        if !(s.u.is_finite() && s.m.is_finite()) {
            return Err(Error::StabilityViolation {
                t: s.t,
                detail: "non-finite values".into(),
            });
        }
        s.check_bounds(self.params.c0)?;
        Ok(StepStats {
            dt,
            cg_iterations: stats.iterations,
        })
    }

    /// Advances to `t_end`, recording `s0` and the state at every requested
    /// time in `(s0.t, t_end]` as well as at `t_end`. Snapshot times are hit
    /// exactly by shortening the step before each.
    pub fn run(&mut self, s0: DiffuseState, t_end: f64, snapshot_times: &[f64]) -> Result<Trajectory<DiffuseState>> {
        self.run_observed(s0, t_end, snapshot_times, |_| {})
    }

    /// As [`run`](Self::run), calling `observe` after every step.
    pub fn run_observed(
        &mut self,
        s0: DiffuseState,
        t_end: f64,
        snapshot_times: &[f64],
        mut observe: impl FnMut(&DiffuseState),
    ) -> Result<Trajectory<DiffuseState>> {
        if !(t_end >= s0.t) {
            return Err(Error::InvalidParams(format!("t_end = {t_end} precedes the start time {}", s0.t)));
        }
        let targets = snapshot_targets(s0.t, t_end, snapshot_times);
        let mut states = vec![s0.clone()];
        let mut s = s0;
        for target in targets {
            while s.t < target {
                let dt_max = self.dt_max(&s);
                let remaining = target - s.t;
                let last = remaining <= dt_max;
                let dt = if last { remaining } else { dt_max };
                self.step(&mut s, dt)?;
                if last {
                    s.t = target;
                }
                observe(&s);
            }
            states.push(s.clone());
        }
        Ok(Trajectory { states })
    }
}

/// Sorted, deduplicated snapshot times in `(t0, t_end]`, ending at `t_end`.
pub(crate) fn snapshot_targets(t0: f64, t_end: f64, times: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = times.iter().copied().filter(|&t| t > t0 && t < t_end).collect();
    if t_end > t0 {
        out.push(t_end);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// States recorded at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
}

/// Access to the time stamp of a recorded state.
pub trait Timed {
    fn time(&self) -> f64;
}

impl Timed for DiffuseState {
    fn time(&self) -> f64 {
        self.t
    }
}

impl<S: Timed> Trajectory<S> {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(Timed::time).collect()
    }

    /// State recorded at `t`, matched to relative round-off.
    pub fn at(&self, t: f64) -> Result<&S> {
        self.states
            .iter()
            .find(|s| (s.time() - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(Error::MissingSnapshot { t })
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

pub fn step_diffuse(s: &DiffuseState, p: &HaptoParams, dt: f64) -> Result<DiffuseState> {
    let mut next = s.clone();
    DiffuseSolver::new(p.clone(), s.grid())?.step(&mut next, dt)?;
    Ok(next)
}

pub fn run_diffuse(
    s0: DiffuseState,
    p: &HaptoParams,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<Trajectory<DiffuseState>> {
    DiffuseSolver::new(p.clone(), s0.grid())?.run(s0, t_end, snapshot_times)
}

/// `(v, m)` at one time of a prescribed-density run.
#[derive(Debug, Clone, PartialEq)]
pub struct EcmSnapshot {
    pub t: f64,
    pub v: ScalarField,
    pub m: ScalarField,
}

/// Integrates the `(v, m)` subsystem for a prescribed history of `u`.
/// `u_traj` holds `(t_k, u_k)` with increasing times; on each interval the
/// density is frozen at its left value, and intervals longer than `max_dt`
/// are subdivided. The output holds one snapshot per input time.
pub fn solve_vm_for_u(
    u_traj: &[(f64, ScalarField)],
    p: &HaptoParams,
    v0: &ScalarField,
    m0: &ScalarField,
    max_dt: f64,
) -> Result<Vec<EcmSnapshot>> {
    p.validate()?;
    let Some((t0, first)) = u_traj.first() else {
        return Ok(Vec::new());
    };
    let g = first.grid;
    if !(v0.grid.same_shape(&g) && m0.grid.same_shape(&g)) {
        return Err(Error::ShapeMismatch {
            expected: g.len(),
            got: v0.grid.len().max(m0.grid.len()),
        });
    }
    if !(max_dt > 0.0) {
        return Err(Error::InvalidParams(format!("max_dt must be positive, got {max_dt}")));
    }
    for (t, u) in u_traj {
        if !u.grid.same_shape(&g) {
            return Err(Error::ShapeMismatch {
                expected: g.len(),
                got: u.grid.len(),
            });
        }
        if u.min() < -BOUND_TOL || u.max() > p.c0 + BOUND_TOL {
            return Err(Error::InvalidInitialData(format!("prescribed u at t = {t} leaves [0, C0]")));
        }
    }
    let mut ecm = EcmStepper::new(g);
    let mut m = m0.clone();
    let mut v = v0.clone();
    let mut int_m = ScalarField::zeros(g);
    let mut out = vec![EcmSnapshot {
        t: *t0,
        v: v.clone(),
        m: m.clone(),
    }];
    for w in u_traj.windows(2) {
        let ((ta, ua), (tb, _)) = (&w[0], &w[1]);
        if !(tb > ta) {
            return Err(Error::InvalidParams("prescribed u times must increase".into()));
        }
        let n = ((tb - ta) / max_dt).ceil().max(1.0) as usize;
        let dt = (tb - ta) / n as f64;
        for _ in 0..n {
            ecm.advance(
                &ua.values,
                &v0.values,
                &mut m.values,
                &mut int_m.values,
                &mut v.values,
                p.lambda,
                p.alpha,
                dt,
            )?;
        }
        out.push(EcmSnapshot {
            t: *tb,
            v: v.clone(),
            m: m.clone(),
        });
    }
    Ok(out)
}
