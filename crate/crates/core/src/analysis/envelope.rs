//! Sub- and super-solution envelopes around the sharp interface and the
//! residual of the cell-density operator.

use serde::{Deserialize, Serialize};

use crate::bistable::{f_bistable, standing_profile, ChiSpec, EnvelopeConstants};
use crate::error::{Error, Result};
use crate::grid::{laplacian_neumann, ScalarField};

/// Which envelope to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `U0((d + eps p) / eps) - q`
    Lower,
    /// `U0((d - eps p) / eps) + q`
    Upper,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

/// `U0((d -+ eps p(t)) / eps) +- q(t)` pointwise, from the clamped signed
/// distance `d` to the sharp interface at time `t`.
pub fn envelope_fields(d: &ScalarField, t: f64, eps: f64, c: &EnvelopeConstants, side: Side) -> Result<ScalarField> {
    let (p, q) = c.p_q(t, eps)?;
    let s = side.sign();
    Ok(d.map(|dk| standing_profile((dk - s * eps * p) / eps) + s * q))
}

fn same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid.same_shape(&b.grid) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: a.grid.len(),
            got: b.grid.len(),
        })
    }
}

/// `div(phi grad chi(v))` with face-averaged `phi`, face differences of
/// `chi(v)` and no flux through the walls.
fn haptotactic_divergence(phi: &ScalarField, chi_v: &[f64]) -> ScalarField {
    let g = phi.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv_h2 = 1.0 / (g.h * g.h);
    let u = &phi.values;
    let mut out = ScalarField::zeros(g);
    let o = &mut out.values;
    for j in 0..ny {
        for i in 0..nx - 1 {
            let k = j * nx + i;
            let flux = 0.5 * (u[k] + u[k + 1]) * (chi_v[k + 1] - chi_v[k]) * inv_h2;
            o[k] += flux;
            o[k + 1] -= flux;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let k = j * nx + i;
            let flux = 0.5 * (u[k] + u[k + nx]) * (chi_v[k + nx] - chi_v[k]) * inv_h2;
            o[k] += flux;
            o[k + nx] -= flux;
        }
    }
    out
}

/// `phi_t - Lap phi + div(phi grad chi(v)) - f(phi) / eps^2` with `phi_t`
/// supplied by the caller.
pub fn residual_lv(phi: &ScalarField, v: &ScalarField, phi_t: &ScalarField, chi: &ChiSpec, eps: f64) -> Result<ScalarField> {
    same_grid(phi, v)?;
    same_grid(phi, phi_t)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    let chi_v: Vec<f64> = v.values.iter().map(|&x| chi.value(x)).collect();
    let lap = laplacian_neumann(phi);
    let hapto = haptotactic_divergence(phi, &chi_v);
    let inv = 1.0 / (eps * eps);
    let mut out = phi_t.clone();
    for k in 0..out.values.len() {
        out.values[k] += hapto.values[k] - lap.values[k] - inv * f_bistable(phi.values[k]);
    }
    Ok(out)
}

/// Position of a diffuse solution relative to the envelopes at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub t: f64,
    pub q: f64,
    pub slack: f64,
    /// `max(u - u+)`.
    pub excess_upper: f64,
    /// `max(u- - u)`.
    pub excess_lower: f64,
    /// Grid points with either excess above `slack`.
    pub violations: usize,
}

/// Compares `u` with both envelopes built from `d` at time `t`, allowing
/// `base_slack + q(t)`.
pub fn check_bracket(
    u: &ScalarField,
    d: &ScalarField,
    t: f64,
    eps: f64,
    c: &EnvelopeConstants,
    base_slack: f64,
) -> Result<BracketCheck> {
    same_grid(u, d)?;
    let (_, q) = c.p_q(t, eps)?;
    let hi = envelope_fields(d, t, eps, c, Side::Upper)?;
    let lo = envelope_fields(d, t, eps, c, Side::Lower)?;
    let slack = base_slack + q;
    let (mut excess_upper, mut excess_lower) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut violations = 0;
    for k in 0..u.values.len() {
        let a = u.values[k] - hi.values[k];
        let b = lo.values[k] - u.values[k];
        excess_upper = excess_upper.max(a);
        excess_lower = excess_lower.max(b);
        if a > slack || b > slack {
            violations += 1;
        }
    }
    Ok(BracketCheck {
        t,
        q,
        slack,
        excess_upper,
        excess_lower,
        violations,
    })
}

/// Sign of the operator on both envelopes over one time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub t: f64,
    pub tol: f64,
    pub points: usize,
    /// Smallest residual of the upper envelope; should not fall below `-tol`.
    pub min_upper: f64,
    /// Largest residual of the lower envelope; should not exceed `tol`.
    pub max_lower: f64,
    pub violations: usize,
}

impl ResidualCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Slack `5 (h + dt) / eps^2` for the sign checks.
pub fn residual_slack(h: f64, dt: f64, eps: f64) -> f64 {
    5.0 * (h + dt) / (eps * eps)
}

/// Evaluates the operator on both envelopes at the midpoint of `[t_a, t_b]`,
/// with time derivatives from the difference of the envelopes at the ends and
/// the distance and ECM density averaged. Points with `|d| < band` at the
/// midpoint are checked against [`residual_slack`].
#[allow(clippy::too_many_arguments)]
pub fn check_residual_signs(
    (t_a, d_a): (f64, &ScalarField),
    (t_b, d_b): (f64, &ScalarField),
    v: &ScalarField,
    chi: &ChiSpec,
    eps: f64,
    c: &EnvelopeConstants,
    band: f64,
) -> Result<ResidualCheck> {
    same_grid(d_a, d_b)?;
    same_grid(d_a, v)?;
    if !(t_b > t_a) {
        return Err(Error::InvalidParams("residual check needs t_b > t_a".into()));
    }
    let dt = t_b - t_a;
    let t = 0.5 * (t_a + t_b);
    let d_mid = d_a.zip_map(d_b, |a, b| 0.5 * (a + b));
    let tol = residual_slack(d_a.grid.h, dt, eps);
    let mut res = [ScalarField::zeros(d_a.grid), ScalarField::zeros(d_a.grid)];
    for (slot, side) in res.iter_mut().zip([Side::Upper, Side::Lower]) {
        let a = envelope_fields(d_a, t_a, eps, c, side)?;
        let b = envelope_fields(d_b, t_b, eps, c, side)?;
        let rate = b.zip_map(&a, |x, y| (x - y) / dt);
        let mid = envelope_fields(&d_mid, t, eps, c, side)?;
        *slot = residual_lv(&mid, v, &rate, chi, eps)?;
    }
    let (mut min_upper, mut max_lower) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut points, mut violations) = (0, 0);
    for k in 0..d_mid.values.len() {
        if d_mid.values[k].abs() >= band {
            continue;
        }
        points += 1;
        let (up, lo) = (res[0].values[k], res[1].values[k]);
        min_upper = min_upper.min(up);
        max_lower = max_lower.max(lo);
        if up < -tol || lo > tol {
            violations += 1;
        }
    }
    Ok(ResidualCheck {
        t,
        tol,
        points,
        min_upper,
        max_lower,
        violations,
    })
}
