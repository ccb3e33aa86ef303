//! Level-set solver for the sharp-interface limit: the interface moves with
//! normal velocity `V_n = -kappa + d chi(v)/dn` (outward normal, 2-D) while
//! `v` and `m` evolve with the indicator of the enclosed region as source.

use serde::{Deserialize, Serialize};

use crate::analysis::interface::{extract_level_curve, LevelCurves};
use crate::bistable::ChiSpec;
use crate::curve::{segment_foot, InterfaceCurve, SegmentIndex};
use crate::diffuse::{snapshot_targets, EcmStepper, HaptoParams, Timed, Trajectory, BOUND_TOL};
use crate::error::{Error, Result};
use crate::grid::{gradient_centered_into, interpolate_cubic_hessian, laplacian_neumann, Grid, ScalarField};

/// Minimum `|grad phi|` accepted next to the interface.
pub const MIN_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpConfig {
    /// Distance scale: updates run in `|phi| < 2 d0`, distances saturate at
    /// `3 d0`, and the interface must keep `4 d0` from the walls.
    pub d0: f64,
    /// Steps between redistancing passes.
    #[serde(default = "default_redistance_every")]
    pub redistance_every: usize,
}

fn default_redistance_every() -> usize {
    5
}

impl Default for SharpConfig {
    fn default() -> Self {
        Self {
            d0: 0.05,
            redistance_every: default_redistance_every(),
        }
    }
}

impl SharpConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.d0 > 2.0 * grid.h) || self.redistance_every == 0 {
            return Err(Error::InvalidParams(format!(
                "level-set band needs d0 > 2h and a positive redistance cadence (d0 = {}, h = {}, every = {})",
                self.d0, grid.h, self.redistance_every
            )));
        }
        Ok(())
    }
}

/// Smooth clamp: identity on `[-2 d0, 2 d0]`, constant `+-3 d0` beyond
/// `3 d0`, and a quintic `C^2` monotone blend in between.
pub fn zeta(s: f64, d0: f64) -> f64 {
    let a = s.abs();
    if a <= 2.0 * d0 {
        return s;
    }
    if a >= 3.0 * d0 {
        return (3.0 * d0).copysign(s);
    }
    let x = (a - 2.0 * d0) / d0;
    let g = x + x * x * x * (4.0 + x * (-7.0 + 3.0 * x));
    (2.0 * d0 + d0 * g).copysign(s)
}

/// Inverse of [`zeta`] below the plateau; `None` for `|z| >= 3 d0`.
pub fn zeta_inverse(z: f64, d0: f64) -> Option<f64> {
    let a = z.abs();
    if a <= 2.0 * d0 {
        return Some(z);
    }
    if a >= 3.0 * d0 {
        return None;
    }
    let y = (a - 2.0 * d0) / d0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..56 {
        let x = 0.5 * (lo + hi);
        if x + x * x * x * (4.0 + x * (-7.0 + 3.0 * x)) > y {
            hi = x;
        } else {
            lo = x;
        }
    }
    let x = 0.5 * (lo + hi);
    Some((2.0 * d0 + d0 * x).copysign(z))
}

/// Even-odd inside test of every cell center against closed curves.
pub fn inside_mask(curves: &[&InterfaceCurve], grid: Grid) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    let mut xs = Vec::new();
    for j in 0..grid.ny {
        let y = grid.center(0, j)[1];
        xs.clear();
        for c in curves {
            for (a, b) in c.segments() {
                if (a[1] <= y) != (b[1] <= y) {
                    xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for i in 0..grid.nx {
            let x = grid.center(i, j)[0];
            mask[grid.idx(i, j)] = xs.partition_point(|&c| c < x) % 2 == 1;
        }
    }
    mask
}

/// Exact unsigned distance from every cell center to a closed polyline.
/// Vertices are grouped under coarse chords; the bound on how far each group
/// strays from its chord prunes the groups that cannot hold the nearest point.
pub fn polyline_distance_field(curve: &InterfaceCurve, grid: Grid) -> ScalarField {
    let n = curve.len();
    let pts = &curve.points;
    let gs = ((n as f64).sqrt().ceil() as usize).max(1);
    let groups: Vec<(usize, usize)> = (0..n).step_by(gs).map(|s| (s, (s + gs).min(n))).collect();
    let chords: Vec<([f64; 2], [f64; 2], f64)> = groups
        .iter()
        .map(|&(s, e)| {
            let (a, b) = (pts[s], pts[e % n]);
            let stray = (s..=e)
                .map(|k| segment_foot(pts[k % n], a, b).1)
                .fold(0.0, f64::max)
                .sqrt();
            (a, b, stray)
        })
        .collect();
    let group_min = |p: [f64; 2], (s, e): (usize, usize)| {
        (s..e)
            .map(|k| segment_foot(p, pts[k], pts[(k + 1) % n]).1)
            .fold(f64::INFINITY, f64::min)
    };
    let mut lower = vec![0.0; chords.len()];
    let mut out = ScalarField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.center(i, j);
            let mut best_g = 0;
            let mut best_lb = f64::INFINITY;
            for (g, &(a, b, stray)) in chords.iter().enumerate() {
                let lb = segment_foot(p, a, b).1.sqrt() - stray;
                lower[g] = lb;
                if lb < best_lb {
                    best_lb = lb;
                    best_g = g;
                }
            }
            let mut best = group_min(p, groups[best_g]);
            for (g, &lb) in lower.iter().enumerate() {
                if g != best_g && lb.max(0.0).powi(2) < best {
                    best = best.min(group_min(p, groups[g]));
                }
            }
            out.values[grid.idx(i, j)] = best.sqrt();
        }
    }
    out
}

/// Signed distance to a closed simple curve, negative inside.
pub fn init_levelset(gamma0: &InterfaceCurve, grid: Grid) -> Result<ScalarField> {
    if !gamma0.is_simple() {
        return Err(Error::InvalidCurve("initial curve intersects itself".into()));
    }
    let mut d = polyline_distance_field(gamma0, grid);
    let mask = inside_mask(&[gamma0], grid);
    for (v, inside) in d.values.iter_mut().zip(mask) {
        if inside {
            *v = -*v;
        }
    }
    Ok(d)
}

#[inline]
fn derivatives(phi: &ScalarField, i: usize, j: usize) -> [f64; 5] {
    let g = phi.grid;
    let h = g.h;
    if i > 0 && j > 0 && i + 1 < g.nx && j + 1 < g.ny {
        let f = &phi.values;
        let k = j * g.nx + i;
        let (c, e, w, n, s) = (f[k], f[k + 1], f[k - 1], f[k + g.nx], f[k - g.nx]);
        let (ih2, i2h) = (1.0 / (h * h), 0.5 / h);
        return [
            (e - w) * i2h,
            (n - s) * i2h,
            (e - 2.0 * c + w) * ih2,
            (n - 2.0 * c + s) * ih2,
            (f[k + g.nx + 1] - f[k - g.nx + 1] - f[k + g.nx - 1] + f[k - g.nx - 1]) * 0.25 * ih2,
        ];
    }
    let (i, j) = (i as isize, j as isize);
    let c = phi.ghosted(i, j);
    let (e, w) = (phi.ghosted(i + 1, j), phi.ghosted(i - 1, j));
    let (n, s) = (phi.ghosted(i, j + 1), phi.ghosted(i, j - 1));
    let px = (e - w) / (2.0 * h);
    let py = (n - s) / (2.0 * h);
    let pxx = (e - 2.0 * c + w) / (h * h);
    let pyy = (n - 2.0 * c + s) / (h * h);
    let pxy = (phi.ghosted(i + 1, j + 1) - phi.ghosted(i + 1, j - 1) - phi.ghosted(i - 1, j + 1)
        + phi.ghosted(i - 1, j - 1))
        / (4.0 * h * h);
    [px, py, pxx, pyy, pxy]
}

/// `kappa |grad phi|` from the derivative stencil; zero for flat gradients.
#[inline]
fn curvature_flux(d: [f64; 5]) -> f64 {
    let [px, py, pxx, pyy, pxy] = d;
    let g2 = px * px + py * py;
    if g2 < MIN_GRADIENT * MIN_GRADIENT {
        return 0.0;
    }
    (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / g2
}

/// `div(grad phi / |grad phi|)` on cells with `|phi| < band` (zero elsewhere);
/// positive on the boundary of a convex region where `phi < 0`. Errors when
/// the gradient degenerates inside the band.
pub fn curvature_times_nminus1(phi: &ScalarField, band: f64) -> Result<ScalarField> {
    let g = phi.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            if phi.at(i, j).abs() >= band {
                continue;
            }
            let d = derivatives(phi, i, j);
            let grad = d[0].hypot(d[1]);
            if grad < MIN_GRADIENT {
                let c = g.center(i, j);
                return Err(Error::DegenerateLevelSet { grad, x: c[0], y: c[1] });
            }
            out.values[g.idx(i, j)] = curvature_flux(d) / grad;
        }
    }
    Ok(out)
}

/// Outcome of redistancing.
#[derive(Debug, Clone)]
pub struct Redistanced {
    pub phi: ScalarField,
    pub curves: LevelCurves,
}

/// Rebuilds `phi` as the clamped signed distance `zeta(d)` to its own zero
/// level set, with `band = 3 d0`. Nodes in the band are projected onto the
/// zero set of the bicubic interpolant of `phi`, starting from the foot point
/// on the marching-squares polyline, which also serves as the fallback.
/// Returns `None` when the zero level set is empty.
pub fn redistance(phi: &ScalarField, band: f64) -> Result<Option<Redistanced>> {
    let g = phi.grid;
    let d0 = band / 3.0;
    let curves = match extract_level_curve(phi, 0.0) {
        Ok(c) => c,
        Err(Error::EmptyInterface { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let n = g.len();
    let mut dist2 = vec![f64::INFINITY; n];
    let mut foot = vec![[0.0f64; 2]; n];
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let cell = |x: f64, origin: f64| ((x - origin) / g.h - 0.5).floor() as isize;
    for c in curves.all() {
        for (a, b) in c.segments() {
            let i0 = cell(a[0].min(b[0]) - band, g.origin[0]).clamp(0, nx - 1);
            let i1 = (cell(a[0].max(b[0]) + band, g.origin[0]) + 1).clamp(0, nx - 1);
            let j0 = cell(a[1].min(b[1]) - band, g.origin[1]).clamp(0, ny - 1);
            let j1 = (cell(a[1].max(b[1]) + band, g.origin[1]) + 1).clamp(0, ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let k = g.idx(i as usize, j as usize);
                    let (q, d2) = segment_foot(g.center(i as usize, j as usize), a, b);
                    if d2 < dist2[k] {
                        dist2[k] = d2;
                        foot[k] = q;
                    }
                }
            }
        }
    }
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let sign = if phi.values[k] < 0.0 { -1.0 } else { 1.0 };
            let d = dist2[k].sqrt();
            let dist = if d < band {
                project_to_zero_set(phi, g.center(i, j), foot[k]).map_or(d, |(v, _)| v)
            } else {
                d
            };
            out.values[k] = zeta(sign * dist.min(band), d0);
        }
    }
    Ok(Some(Redistanced { phi: out, curves }))
}

/// Closest point on the zero set of the bicubic interpolant: Newton's method
/// on `p - x + mu grad phi(p) = 0, phi(p) = 0`, started from `start` and
/// required to stay within `2 h` of it. Returns the distance `|x - p|`.
fn project_to_zero_set(phi: &ScalarField, x: [f64; 2], start: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let h = phi.grid.h;
    let mut p = start;
    let mut mu = None;
    for _ in 0..20 {
        let (val, gr, hs) = interpolate_cubic_hessian(phi, p).ok()?;
        let g2 = gr[0] * gr[0] + gr[1] * gr[1];
        if g2 < 1e-12 {
            return None;
        }
        let r = [p[0] - x[0], p[1] - x[1]];
        let m = *mu.get_or_insert(-(r[0] * gr[0] + r[1] * gr[1]) / g2);
        let f = [r[0] + m * gr[0], r[1] + m * gr[1], val];
        // [[I + mu H, g], [g^T, 0]] (dp, dmu) = -f
        let (a11, a12, a22) = (1.0 + m * hs[0], m * hs[1], 1.0 + m * hs[2]);
        let det_a = a11 * a22 - a12 * a12;
        if det_a.abs() < 1e-12 {
            return None;
        }
        // Schur complement on mu.
        let ainv_g = [(a22 * gr[0] - a12 * gr[1]) / det_a, (a11 * gr[1] - a12 * gr[0]) / det_a];
        let ainv_f = [(a22 * f[0] - a12 * f[1]) / det_a, (a11 * f[1] - a12 * f[0]) / det_a];
        let schur = gr[0] * ainv_g[0] + gr[1] * ainv_g[1];
        if schur.abs() < 1e-14 {
            return None;
        }
        let dmu = (f[2] - (gr[0] * ainv_f[0] + gr[1] * ainv_f[1])) / schur;
        let step = [-ainv_f[0] - ainv_g[0] * dmu, -ainv_f[1] - ainv_g[1] * dmu];
        p = [p[0] + step[0], p[1] + step[1]];
        mu = Some(m + dmu);
        let moved = [p[0] - start[0], p[1] - start[1]];
        if moved[0] * moved[0] + moved[1] * moved[1] > 4.0 * h * h {
            return None;
        }
        // Quadratic convergence: the error after this step is far below it.
        if step[0] * step[0] + step[1] * step[1] <= 1e-14 * h * h {
            return Some(((x[0] - p[0]).hypot(x[1] - p[1]), p));
        }
    }
    None
}

/// Redistancing for a `phi` that is already close to a clamped signed
/// distance `zeta(d)`, as between the passes of the level-set solver. Nodes
/// with `|phi| < zeta(5 d0 / 2)` start their projection at
/// `x - zeta^-1(phi) n` with `n` the normalized centred gradient. The outer
/// nodes, up to and including plateau nodes next to non-plateau ones, are
/// reached breadth-first and start from a neighbour's foot point. Failed
/// starts fall back to the nearest polyline foot. The remaining plateau nodes
/// keep `+-3 d0`, so the interface must move less than a cell between passes.
pub fn redistance_local(phi: &ScalarField, d0: f64) -> Result<Option<Redistanced>> {
    let g = phi.grid;
    let curves = match extract_level_curve(phi, 0.0) {
        Ok(c) => c,
        Err(Error::EmptyInterface { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let band = 3.0 * d0;
    let inner = zeta(2.5 * d0, d0);
    let n = g.len();
    let plateau: Vec<bool> = phi.values.iter().map(|&p| p.abs() >= band).collect();
    let neighbours = |k: usize| {
        let (i, j) = (k % g.nx, k / g.nx);
        [
            (i > 0).then(|| k - 1),
            (i + 1 < g.nx).then(|| k + 1),
            (j > 0).then(|| k - g.nx),
            (j + 1 < g.ny).then(|| k + g.nx),
        ]
        .into_iter()
        .flatten()
    };
    let mut index: Option<SegmentIndex> = None;
    let mut fallback = |x: [f64; 2]| {
        let idx = index.get_or_insert_with(|| SegmentIndex::new(&curves.all().collect::<Vec<_>>()));
        match idx.nearest(x) {
            Some(nr) if nr.distance < band + 2.0 * g.h => {
                project_to_zero_set(phi, x, nr.foot).unwrap_or((nr.distance, nr.foot))
            }
            Some(nr) => (nr.distance, nr.foot),
            None => (band, x),
        }
    };
    let mut dist = vec![band; n];
    let mut foot: Vec<Option<[f64; 2]>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let p = phi.values[k];
            if p.abs() >= inner {
                continue;
            }
            let x = g.center(i, j);
            let d = derivatives(phi, i, j);
            let gn = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let sd = zeta_inverse(p, d0).unwrap_or(p);
            let guess = if gn > 1e-3 {
                project_to_zero_set(phi, x, [x[0] - sd * d[0] / gn, x[1] - sd * d[1] / gn])
            } else {
                None
            };
            let (dk, q) = guess.unwrap_or_else(|| fallback(x));
            dist[k] = dk;
            foot[k] = Some(q);
            queue.push_back(k);
        }
    }
    let is_target = |k: usize| !plateau[k] || neighbours(k).any(|m| !plateau[m]);
    while let Some(k) = queue.pop_front() {
        let q = foot[k].expect("queued nodes carry a foot point");
        for m in neighbours(k) {
            if foot[m].is_some() || !is_target(m) {
                continue;
            }
            let x = g.center(m % g.nx, m / g.nx);
            let (dm, qm) = project_to_zero_set(phi, x, q).unwrap_or_else(|| fallback(x));
            dist[m] = dm;
            foot[m] = Some(qm);
            queue.push_back(m);
        }
    }
    let mut out = ScalarField::zeros(g);
    for k in 0..n {
        let sign = if phi.values[k] < 0.0 { -1.0 } else { 1.0 };
        if foot[k].is_none() && is_target(k) {
            let c = g.center(k % g.nx, k / g.nx);
            dist[k] = fallback(c).0;
        }
        out.values[k] = zeta(sign * dist[k].min(band), d0);
    }
    Ok(Some(Redistanced { phi: out, curves }))
}

/// Smallest and largest `|grad phi|` over cells with `|phi| <= band`.
pub fn gradient_range(phi: &ScalarField, band: f64) -> (f64, f64) {
    let g = phi.grid;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if phi.at(i, j).abs() <= band {
                let d = derivatives(phi, i, j);
                let m = d[0].hypot(d[1]);
                lo = lo.min(m);
                hi = hi.max(m);
            }
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpState {
    /// Level-set function, negative inside the tumor region.
    pub phi: ScalarField,
    pub v: ScalarField,
    pub m: ScalarField,
    pub int_m: ScalarField,
    /// ECM density at time zero; `v = v_init exp(-lambda int_m)`.
    pub v_init: ScalarField,
    pub t: f64,
}

impl Timed for SharpState {
    fn time(&self) -> f64 {
        self.t
    }
}

impl SharpState {
    pub fn new(gamma0: &InterfaceCurve, v_init: ScalarField, m0: ScalarField, d0: f64) -> Result<Self> {
        let g = v_init.grid;
        if !m0.grid.same_shape(&g) {
            return Err(Error::ShapeMismatch {
                expected: g.len(),
                got: m0.grid.len(),
            });
        }
        let phi = init_levelset(gamma0, g)?.map(|s| zeta(s, d0));
        Ok(Self {
            phi,
            v: v_init.clone(),
            m: m0,
            int_m: ScalarField::zeros(g),
            v_init,
            t: 0.0,
        })
    }

    pub fn grid(&self) -> Grid {
        self.phi.grid
    }

    /// Indicator of `{phi < 0}`.
    pub fn indicator(&self) -> ScalarField {
        self.phi.map(|p| if p < 0.0 { 1.0 } else { 0.0 })
    }

    pub fn is_extinct(&self) -> bool {
        !(self.phi.min() < 0.0)
    }

    pub fn interface(&self) -> Result<LevelCurves> {
        extract_level_curve(&self.phi, 0.0)
    }

    pub fn check_bounds(&self, c0: f64) -> Result<()> {
        let (lo, hi) = (self.m.min(), self.m.max());
        if !(lo >= -BOUND_TOL && hi <= c0 + BOUND_TOL) {
            return Err(Error::StabilityViolation {
                t: self.t,
                detail: format!("m left [0, C0]: range [{lo}, {hi}]"),
            });
        }
        let ok = self
            .v
            .values
            .iter()
            .zip(&self.v_init.values)
            .fold(true, |ok, (&v, &v0)| ok & (v >= 0.0) & (v <= v0));
        if ok {
            return Ok(());
        }
        for (v, v0) in self.v.values.iter().zip(&self.v_init.values) {
            if !(*v >= 0.0 && *v <= *v0) {
                return Err(Error::StabilityViolation {
                    t: self.t,
                    detail: format!("v = {v} outside [0, v0 = {v0}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharpStatus {
    Active,
    Extinct,
}

#[derive(Debug, Clone)]
pub struct SharpSolver {
    pub params: HaptoParams,
    pub config: SharpConfig,
    grid: Grid,
    ecm: EcmStepper,
    chi_v: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    u: Vec<f64>,
    rate: Vec<f64>,
    steps: usize,
}

impl SharpSolver {
    pub fn new(params: HaptoParams, config: SharpConfig, grid: Grid) -> Result<Self> {
        params.validate()?;
        config.validate(&grid)?;
        let n = grid.len();
        Ok(Self {
            params,
            config,
            grid,
            ecm: EcmStepper::new(grid),
            chi_v: vec![0.0; n],
            wx: vec![0.0; n],
            wy: vec![0.0; n],
            u: vec![0.0; n],
            rate: vec![0.0; n],
            steps: 0,
        })
    }

    fn load_drift(&mut self, v: &ScalarField) -> f64 {
        if self.params.chi.is_inert() {
            return 0.0;
        }
        let chi: &ChiSpec = &self.params.chi;
        for (c, &vk) in self.chi_v.iter_mut().zip(&v.values) {
            *c = chi.value(vk);
        }
        gradient_centered_into(&self.chi_v, self.grid, &mut self.wx, &mut self.wy);
        self.wx
            .iter()
            .zip(&self.wy)
            .fold(0.0f64, |a, (x, y)| a.max(x.hypot(*y)))
    }

    fn bound_for(&self, drift: f64) -> f64 {
        let h = self.grid.h;
        let mut dt = h * h / 8.0;
        if drift > 0.0 {
            dt = dt.min(h / (4.0 * drift));
        }
        dt
    }

    /// `min(h^2/8, h / (4 max|grad chi(v)|))`.
    pub fn dt_max(&mut self, s: &SharpState) -> f64 {
        let drift = self.load_drift(&s.v);
        self.bound_for(drift)
    }

    /// One explicit step; redistances every `redistance_every` steps.
    pub fn step(&mut self, s: &mut SharpState, dt: f64) -> Result<SharpStatus> {
        if !s.phi.grid.same_shape(&self.grid) {
            return Err(Error::ShapeMismatch {
                expected: self.grid.len(),
                got: s.phi.grid.len(),
            });
        }
        let drift = self.load_drift(&s.v);
        self.advance(s, dt, drift).map(|(status, _)| status)
    }

    /// Step body given the drift bound of the current `v`; returns the status
    /// and the drift bound of the updated `v`.
    fn advance(&mut self, s: &mut SharpState, dt: f64, drift: f64) -> Result<(SharpStatus, f64)> {
        let g = self.grid;
        let dt_max = self.bound_for(drift);
        if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::TimeStepTooLarge { dt, dt_max });
        }
        for (u, &p) in self.u.iter_mut().zip(&s.phi.values) {
            *u = if p < 0.0 { 1.0 } else { 0.0 };
        }
        let p = &self.params;
        self.ecm.advance(
            &self.u,
            &s.v_init.values,
            &mut s.m.values,
            &mut s.int_m.values,
            &mut s.v.values,
            p.lambda,
            p.alpha,
            dt,
        )?;
        let new_drift = self.load_drift(&s.v);
        if dt > self.bound_for(new_drift) * (1.0 + 1e-12) {
            // The bound only tightens as v steepens; honour it for the motion too.
            return Err(Error::TimeStepTooLarge {
                dt,
                dt_max: self.bound_for(new_drift),
            });
        }

        let band = 2.0 * self.config.d0;
        let h = g.h;
        let inert = self.params.chi.is_inert();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let c = s.phi.values[k];
                if c.abs() >= band {
                    self.rate[k] = 0.0;
                    continue;
                }
                let d = derivatives(&s.phi, i, j);
                if inert {
                    if c.abs() < 2.0 * h && d[0].hypot(d[1]) < MIN_GRADIENT {
                        let x = g.center(i, j);
                        return Err(Error::DegenerateLevelSet {
                            grad: d[0].hypot(d[1]),
                            x: x[0],
                            y: x[1],
                        });
                    }
                    self.rate[k] = curvature_flux(d);
                    continue;
                }
                if c.abs() < 2.0 * h && d[0].hypot(d[1]) < MIN_GRADIENT {
                    let x = g.center(i, j);
                    return Err(Error::DegenerateLevelSet {
                        grad: d[0].hypot(d[1]),
                        x: x[0],
                        y: x[1],
                    });
                }
                let (ii, jj) = (i as isize, j as isize);
                let (wx, wy) = (self.wx[k], self.wy[k]);
                let dx = if wx > 0.0 {
                    (c - s.phi.ghosted(ii - 1, jj)) / h
                } else {
                    (s.phi.ghosted(ii + 1, jj) - c) / h
                };
                let dy = if wy > 0.0 {
                    (c - s.phi.ghosted(ii, jj - 1)) / h
                } else {
                    (s.phi.ghosted(ii, jj + 1) - c) / h
                };
                self.rate[k] = curvature_flux(d) - (wx * dx + wy * dy);
            }
        }
        for (p, r) in s.phi.values.iter_mut().zip(&self.rate) {
            *p += dt * r;
        }
        s.t += dt;
        self.steps += 1;
        if !s.phi.is_finite() {
            return Err(Error::StabilityViolation {
                t: s.t,
                detail: "non-finite level-set values".into(),
            });
        }
        s.check_bounds(self.params.c0)?;
        if s.is_extinct() {
            return Ok((SharpStatus::Extinct, new_drift));
        }
        if self.steps % self.config.redistance_every == 0 {
            let r = redistance_local(&s.phi, self.config.d0)?;
            return Ok((self.accept_redistanced(s, r)?, new_drift));
        }
        Ok((SharpStatus::Active, new_drift))
    }

    /// Redistances `s` in place from scratch and enforces the wall margin.
    pub fn redistance_state(&self, s: &mut SharpState) -> Result<SharpStatus> {
        let r = redistance(&s.phi, 3.0 * self.config.d0)?;
        self.accept_redistanced(s, r)
    }

    fn accept_redistanced(&self, s: &mut SharpState, r: Option<Redistanced>) -> Result<SharpStatus> {
        match r {
            None => Ok(SharpStatus::Extinct),
            Some(r) => {
                let clearance = r.curves.all().map(|c| c.wall_clearance()).fold(f64::INFINITY, f64::min);
                let margin = 4.0 * self.config.d0;
                if clearance < margin {
                    return Err(Error::WallMargin { clearance, margin });
                }
                s.phi = r.phi;
                Ok(SharpStatus::Active)
            }
        }
    }

    /// Advances to `t_end`, recording redistanced copies of the state at the
    /// requested times. Stops early, without error, if the region vanishes.
    pub fn run(&mut self, s0: SharpState, t_end: f64, snapshot_times: &[f64]) -> Result<SharpRun> {
        if !(t_end >= s0.t) {
            return Err(Error::InvalidParams(format!("t_end = {t_end} precedes the start time {}", s0.t)));
        }
        let targets = snapshot_targets(s0.t, t_end, snapshot_times);
        let mut s = s0;
        let mut first = s.clone();
        if self.redistance_state(&mut first)? == SharpStatus::Extinct {
            return Ok(SharpRun {
                trajectory: Trajectory { states: vec![first] },
                extinct_at: Some(s.t),
            });
        }
        let mut states = vec![first];
        let mut drift = self.load_drift(&s.v);
        for target in targets {
            while s.t < target {
                let dt_max = self.bound_for(drift);
                let remaining = target - s.t;
                let last = remaining <= dt_max;
                let dt = if last { remaining } else { dt_max };
                let (status, next) = self.advance(&mut s, dt, drift)?;
                drift = next;
                if last {
                    s.t = target;
                }
                if status == SharpStatus::Extinct {
                    let at = s.t;
                    states.push(s);
                    return Ok(SharpRun {
                        trajectory: Trajectory { states },
                        extinct_at: Some(at),
                    });
                }
            }
            let mut snap = s.clone();
            if self.redistance_state(&mut snap)? == SharpStatus::Extinct {
                states.push(snap);
                return Ok(SharpRun {
                    trajectory: Trajectory { states },
                    extinct_at: Some(target),
                });
            }
            states.push(snap);
        }
        Ok(SharpRun {
            trajectory: Trajectory { states },
            extinct_at: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SharpRun {
    pub trajectory: Trajectory<SharpState>,
    pub extinct_at: Option<f64>,
}

pub fn step_sharp(s: &SharpState, p: &HaptoParams, config: SharpConfig, dt: f64) -> Result<(SharpState, SharpStatus)> {
    let mut next = s.clone();
    let status = SharpSolver::new(p.clone(), config, s.grid())?.step(&mut next, dt)?;
    Ok((next, status))
}

pub fn run_sharp(
    s0: SharpState,
    p: &HaptoParams,
    config: SharpConfig,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<SharpRun> {
    SharpSolver::new(p.clone(), config, s0.grid())?.run(s0, t_end, snapshot_times)
}

/// Pointwise residual of `d_t - Lap d + grad d . grad chi(v)` between two
/// redistanced states, at cells whose midpoint distance satisfies
/// `|d| <= near`. Returns `(|d|, |residual|)` pairs.
pub fn motion_law_residual(a: &SharpState, b: &SharpState, chi: &ChiSpec, near: f64) -> Result<Vec<(f64, f64)>> {
    let g = a.grid();
    if !(b.t > a.t) {
        return Err(Error::InvalidParams("motion-law residual needs increasing times".into()));
    }
    let dt = b.t - a.t;
    let lap_a = laplacian_neumann(&a.phi);
    let lap_b = laplacian_neumann(&b.phi);
    let mut out = Vec::new();
    let mut gchi = [vec![0.0; g.len()], vec![0.0; g.len()]];
    let chi_mid = ScalarField::from_values(
        g,
        a.v.values.iter().zip(&b.v.values).map(|(x, y)| chi.value(0.5 * (x + y))).collect(),
    )?;
    {
        let [gx, gy] = &mut gchi;
        gradient_centered_into(&chi_mid.values, g, gx, gy);
    }
    let d_mid = a.phi.zip_map(&b.phi, |x, y| 0.5 * (x + y));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let d = d_mid.values[k];
            if d.abs() > near {
                continue;
            }
            let der = derivatives(&d_mid, i, j);
            let dt_term = (b.phi.values[k] - a.phi.values[k]) / dt;
            let lap = 0.5 * (lap_a.values[k] + lap_b.values[k]);
            let adv = der[0] * gchi[0][k] + der[1] * gchi[1][k];
            out.push((d.abs(), (dt_term - lap + adv).abs()));
        }
    }
    Ok(out)
}

/// Least-squares fit `|residual| ~ offset + n0 |d|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionLawFit {
    pub n0: f64,
    pub offset: f64,
    pub samples: usize,
    /// Largest excess of a sample over the fitted line.
    pub max_excess: f64,
}

pub fn fit_motion_law(samples: &[(f64, f64)]) -> Result<MotionLawFit> {
    let n = samples.len() as f64;
    if samples.len() < 3 {
        return Err(Error::InvalidParams("too few samples for a motion-law fit".into()));
    }
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParams("motion-law samples share one distance".into()));
    }
    let n0 = sxy / sxx;
    let offset = my - n0 * mx;
    let max_excess = samples
        .iter()
        .map(|s| s.1 - (offset + n0 * s.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MotionLawFit {
        n0,
        offset,
        samples: samples.len(),
        max_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::Shape;

    fn circle_curve(r: f64, g: Grid) -> InterfaceCurve {
        Shape::Circle {
            center: [0.5, 0.5],
            radius: r,
        }
        .polyline(4096, g)
        .unwrap()
    }

    fn control_params() -> HaptoParams {
        HaptoParams {
            eps: 0.01,
            lambda: 1.0,
            alpha: 0.1,
            chi: ChiSpec::Constant { value: 1.0 },
            c0: 1000.0,
        }
    }

    #[test]
    fn zeta_is_a_smooth_monotone_clamp() {
        let d0 = 0.1;
        assert_eq!(zeta(0.15, d0), 0.15);
        assert_eq!(zeta(-0.2, d0), -0.2);
        assert_eq!(zeta(0.35, d0), 3.0 * d0);
        assert_eq!(zeta(-0.31, d0), -3.0 * d0);
        let mut prev = zeta(-0.4, d0);
        for k in 1..=8000 {
            let s = -0.4 + 0.8 * k as f64 / 8000.0;
            let z = zeta(s, d0);
            assert!(z >= prev);
            prev = z;
        }
        // Continuity of the first two derivatives at the joins.
        let h = 1e-5;
        for s in [0.2, 0.3] {
            let d1l = (zeta(s, d0) - zeta(s - h, d0)) / h;
            let d1r = (zeta(s + h, d0) - zeta(s, d0)) / h;
            assert!((d1l - d1r).abs() < 1e-3);
            let d2l = (zeta(s, d0) - 2.0 * zeta(s - h, d0) + zeta(s - 2.0 * h, d0)) / (h * h);
            let d2r = (zeta(s + 2.0 * h, d0) - 2.0 * zeta(s + h, d0) + zeta(s, d0)) / (h * h);
            assert!((d2l - d2r).abs() < 1.0, "{s}: {d2l} {d2r}");
        }
    }

    #[test]
    fn init_levelset_matches_circle_distance() {
        let g = Grid::unit_square(128).unwrap();
        let r = 0.3;
        let phi = init_levelset(&circle_curve(r, g), g).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.center(i, j);
                let exact = (c[0] - 0.5).hypot(c[1] - 0.5) - r;
                assert!((phi.at(i, j) - exact).abs() <= 1e-3 * g.h, "{i},{j}");
            }
        }
        let (lo, hi) = gradient_range(&phi, 0.15);
        assert!(lo >= 0.95 && hi <= 1.05, "{lo} {hi}");
        let back = extract_level_curve(&phi, 0.0).unwrap().curve;
        assert!(crate::analysis::hausdorff(&back, &circle_curve(r, g)) <= g.h);
    }

    #[test]
    fn distance_field_matches_brute_force_for_stars() {
        let g = Grid::unit_square(48).unwrap();
        let star = Shape::Star {
            center: [0.5, 0.5],
            r0: 0.25,
            amplitude: 0.08,
            k: 5,
        }
        .polyline(777, g)
        .unwrap();
        let fast = polyline_distance_field(&star, g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.center(i, j);
                let brute = star
                    .segments()
                    .map(|(a, b)| segment_foot(p, a, b).1)
                    .fold(f64::INFINITY, f64::min)
                    .sqrt();
                assert_eq!(fast.at(i, j), brute);
            }
        }
    }

    #[test]
    fn init_levelset_rejects_self_intersection() {
        let g = Grid::unit_square(16).unwrap();
        let bow = InterfaceCurve::new(vec![[0.2, 0.2], [0.6, 0.6], [0.6, 0.2], [0.2, 0.6]], g, 0.0).unwrap();
        assert!(matches!(init_levelset(&bow, g), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn curvature_of_circles_and_lines() {
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let g = Grid::unit_square(n).unwrap();
            let r = 0.25;
            let phi = ScalarField::from_fn(g, |x, y| (x - 0.5).hypot(y - 0.5) - r);
            let k = curvature_times_nminus1(&phi, 0.1).unwrap();
            let mut err: f64 = 0.0;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let p = phi.at(i, j);
                    if p.abs() < g.h {
                        let exact = 1.0 / (p + r);
                        err = err.max((k.at(i, j) - exact).abs());
                        assert!((k.at(i, j) * (p + r) - 1.0).abs() < 0.05);
                    }
                }
            }
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0, "{errs:?}");
        }
        let g = Grid::unit_square(32).unwrap();
        let line = ScalarField::from_fn(g, |x, y| 0.6 * x + 0.8 * y - 0.7);
        let k = curvature_times_nminus1(&line, 0.2).unwrap();
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert!(k.at(i, j).abs() <= 1e-8);
            }
        }
        let flat = ScalarField::constant(g, 0.0);
        assert!(matches!(curvature_times_nminus1(&flat, 0.2), Err(Error::DegenerateLevelSet { .. })));
    }

    #[test]
    fn redistance_is_idempotent_and_clamps() {
        let g = Grid::unit_square(128).unwrap();
        let d0 = 0.04;
        let exact = ScalarField::from_fn(g, |x, y| (x - 0.5).hypot(y - 0.5) - 0.3);
        let r = redistance(&exact, 3.0 * d0).unwrap().unwrap();
        for k in 0..g.len() {
            let e = exact.values[k];
            if e.abs() < 2.0 * g.h {
                assert!((r.phi.values[k] - e).abs() <= 1e-3 * g.h, "{e} {}", r.phi.values[k]);
            }
            if e.abs() >= 3.0 * d0 + 1e-12 {
                assert_eq!(r.phi.values[k].abs(), 3.0 * d0);
            }
        }
        let (lo, hi) = gradient_range(&r.phi, 2.0 * d0 - g.h);
        assert!(lo >= 0.95 && hi <= 1.05, "{lo} {hi}");

        // A distorted level set keeps its zero set and gains a unit gradient.
        let warped = exact.map(|p| p * (1.0 + 2.0 * p) * 3.0);
        let r2 = redistance(&warped, 3.0 * d0).unwrap().unwrap();
        let a = extract_level_curve(&warped, 0.0).unwrap().curve;
        let b = extract_level_curve(&r2.phi, 0.0).unwrap().curve;
        assert!(crate::analysis::hausdorff(&a, &b) <= 0.5 * g.h);
        let (lo, hi) = gradient_range(&r2.phi, 2.0 * d0 - g.h);
        assert!(lo >= 0.95 && hi <= 1.05, "{lo} {hi}");

        let none = redistance(&ScalarField::constant(g, 1.0), 0.1).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn zeta_inverse_round_trips() {
        let d0 = 0.02;
        for k in 0..=3000 {
            let s = -0.06 + 0.12 * k as f64 / 3000.0;
            let z = zeta(s, d0);
            match zeta_inverse(z, d0) {
                Some(back) => assert!((back - s).abs() <= 1e-9 * d0 || s.abs() > 2.95 * d0, "{s} {back}"),
                None => assert!(s.abs() >= 3.0 * d0 - 1e-3 * d0),
            }
        }
    }

    #[test]
    fn local_redistance_agrees_with_full_pass() {
        let g = Grid::unit_square(128).unwrap();
        let d0 = 0.04;
        let star = Shape::Star {
            center: [0.5, 0.5],
            r0: 0.25,
            amplitude: 0.04,
            k: 3,
        };
        let exact = ScalarField::from_fn(g, |x, y| zeta(star.signed_distance([x, y]), d0));
        // A small smooth perturbation keeps it close to a distance function.
        let phi = exact.zip_map(&ScalarField::from_fn(g, |x, y| 0.002 * (9.0 * x).sin() * (7.0 * y).cos()), |a, b| {
            if a.abs() < 3.0 * d0 { a + b } else { a }
        });
        let full = redistance(&phi, 3.0 * d0).unwrap().unwrap();
        let local = redistance_local(&phi, d0).unwrap().unwrap();
        for k in 0..g.len() {
            if full.phi.values[k].abs() < 2.0 * d0 {
                assert!((full.phi.values[k] - local.phi.values[k]).abs() <= 1e-9, "{k}");
            }
        }
        assert!(redistance_local(&ScalarField::constant(g, 3.0 * d0), d0).unwrap().is_none());

        // Repeated small inward shifts must drag the plateau along.
        let circle = |r: f64| ScalarField::from_fn(g, |x, y| zeta((x - 0.5).hypot(y - 0.5) - r, d0));
        let mut phi = circle(0.25);
        for _ in 0..30 {
            let shifted = phi.map(|p| if p.abs() < 3.0 * d0 { p + 0.4 * g.h } else { p });
            phi = redistance_local(&shifted, d0).unwrap().unwrap().phi;
        }
        let target = circle(0.25 - 12.0 * g.h);
        for k in 0..g.len() {
            assert!((phi.values[k] - target.values[k]).abs() <= 1e-3 * g.h, "{k}");
        }
    }

    #[test]
    fn straight_interface_is_stationary() {
        let g = Grid::unit_square(64).unwrap();
        let phi = ScalarField::from_fn(g, |x, _| x - 0.5);
        let mut s = SharpState {
            phi: phi.map(|p| zeta(p, 0.1)),
            v: ScalarField::constant(g, 1.0),
            m: ScalarField::zeros(g),
            int_m: ScalarField::zeros(g),
            v_init: ScalarField::constant(g, 1.0),
            t: 0.0,
        };
        let p = HaptoParams {
            chi: ChiSpec::Linear { coef: 1.0 },
            ..control_params()
        };
        let cfg = SharpConfig {
            d0: 0.1,
            redistance_every: 1000,
        };
        let mut solver = SharpSolver::new(p, cfg, g).unwrap();
        let before = s.phi.clone();
        for _ in 0..10 {
            let dt = solver.dt_max(&s);
            solver.step(&mut s, dt).unwrap();
        }
        for k in 0..g.len() {
            if before.values[k].abs() < 0.1 {
                assert!((s.phi.values[k] - before.values[k]).abs() <= 1e-8 * 10.0);
            }
        }
    }

    #[test]
    fn shrinking_circle_follows_curvature_flow() {
        let g = Grid::unit_square(128).unwrap();
        let r0 = 0.3;
        let s0 = SharpState::new(
            &circle_curve(r0, g),
            ScalarField::constant(g, 1.0),
            ScalarField::zeros(g),
            0.04,
        )
        .unwrap();
        let cfg = SharpConfig {
            d0: 0.04,
            redistance_every: 5,
        };
        let times: Vec<f64> = (1..=4).map(|k| 0.005 * k as f64).collect();
        let run = run_sharp(s0, &control_params(), cfg, 0.02, &times).unwrap();
        assert!(run.extinct_at.is_none());
        for s in &run.trajectory.states {
            let r = s.interface().unwrap().curve.equivalent_radius();
            let exact = (r0 * r0 - 2.0 * s.t).sqrt();
            assert!((r - exact).abs() <= 0.01 * exact, "t = {}: {r} vs {exact}", s.t);
            let vid = s.v_init.zip_map(&s.int_m, |v0, i| v0 * (-i).exp());
            assert_eq!(vid, s.v);
        }
        // Residual grows linearly away from the interface with slope 1 / R^2.
        let (a, b) = (&run.trajectory.states[2], &run.trajectory.states[3]);
        let samples = motion_law_residual(a, b, &ChiSpec::Constant { value: 1.0 }, 0.03).unwrap();
        let fit = fit_motion_law(&samples).unwrap();
        let rm = (r0 * r0 - (a.t + b.t)).sqrt();
        assert!((fit.n0 * rm * rm - 1.0).abs() < 0.25, "{fit:?}");
        assert!(fit.offset.abs() < 1.0);
    }

    #[test]
    fn extinction_ends_the_run() {
        let g = Grid::unit_square(64).unwrap();
        let r0 = 0.1;
        let s0 = SharpState::new(
            &circle_curve(r0, g),
            ScalarField::constant(g, 1.0),
            ScalarField::zeros(g),
            0.04,
        )
        .unwrap();
        let cfg = SharpConfig {
            d0: 0.04,
            redistance_every: 5,
        };
        let run = run_sharp(s0, &control_params(), cfg, 0.02, &[]).unwrap();
        let at = run.extinct_at.expect("circle should vanish");
        assert!((at - r0 * r0 / 2.0).abs() < 0.2 * r0 * r0 / 2.0, "{at}");
    }

    #[test]
    fn wall_margin_is_enforced() {
        let g = Grid::unit_square(64).unwrap();
        let s0 = SharpState::new(
            &Shape::Circle {
                center: [0.5, 0.5],
                radius: 0.3,
            }
            .polyline(512, g)
            .unwrap(),
            ScalarField::constant(g, 1.0),
            ScalarField::zeros(g),
            0.06,
        )
        .unwrap();
        let cfg = SharpConfig {
            d0: 0.06,
            redistance_every: 5,
        };
        let err = run_sharp(s0, &control_params(), cfg, 0.001, &[]).unwrap_err();
        assert!(matches!(err, Error::WallMargin { .. }));
    }
}
