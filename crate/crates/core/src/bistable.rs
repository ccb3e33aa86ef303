//! Bistable growth term, standing-wave profile, haptotactic sensitivity and
//! the constants of the sub/super-solution envelopes.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(u) = u (1 - u) (u - 1/2)`.
#[inline]
pub fn f_bistable(u: f64) -> f64 {
    u * (1.0 - u) * (u - 0.5)
}

#[inline]
pub fn f_prime(u: f64) -> f64 {
    -3.0 * u * u + 3.0 * u - 0.5
}

#[inline]
pub fn f_second(u: f64) -> f64 {
    3.0 - 6.0 * u
}

/// Linearized growth rate at the unstable root, `f'(1/2)`.
pub const MU: f64 = 0.25;

/// Decay rate of the profile tails.
pub const PROFILE_DECAY: f64 = 1.0 / SQRT_2;

/// Closed-form standing wave `U0(z) = 1 / (1 + exp(z / sqrt 2))`, solving
/// `U0'' + f(U0) = 0` with `U0(-inf) = 1`, `U0(0) = 1/2`, `U0(+inf) = 0`.
#[inline]
pub fn standing_profile(z: f64) -> f64 {
    // Written in the overflow-safe orientation on each side.
    if z >= 0.0 {
        let e = (-z * PROFILE_DECAY).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (z * PROFILE_DECAY).exp())
    }
}

#[inline]
pub fn standing_profile_prime(z: f64) -> f64 {
    -PROFILE_DECAY * logistic_bump(z)
}

/// `U0 (1 - U0)`, even in `z`; evaluated on the small-`U0` side to avoid cancellation.
#[inline]
fn logistic_bump(z: f64) -> f64 {
    let u = standing_profile(z.abs());
    u * (1.0 - u)
}

#[inline]
pub fn standing_profile_second(z: f64) -> f64 {
    let u = standing_profile(z.abs());
    0.5 * logistic_bump(z) * (1.0 - 2.0 * u).copysign(z)
}

/// Sampled profile produced by the boundary-value solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub newton_iterations: usize,
}

impl ProfileTable {
    /// Closed-form table on `n + 1` evenly spaced nodes of `[-half_width, half_width]`.
    pub fn closed_form(half_width: f64, n: usize) -> Self {
        let dz = 2.0 * half_width / n as f64;
        let z: Vec<f64> = (0..=n).map(|k| -half_width + k as f64 * dz).collect();
        let u = z.iter().map(|&z| standing_profile(z)).collect();
        Self {
            z,
            u,
            newton_iterations: 0,
        }
    }

    /// Linear interpolation inside the table range.
    pub fn value_at(&self, z: f64) -> Option<f64> {
        let n = self.z.len();
        if n < 2 || z < self.z[0] || z > self.z[n - 1] {
            return None;
        }
        let k = self.z.partition_point(|&zk| zk <= z).clamp(1, n - 1);
        let t = (z - self.z[k - 1]) / (self.z[k] - self.z[k - 1]);
        Some(self.u[k - 1] + t * (self.u[k] - self.u[k - 1]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("z,U0\n");
        for (z, u) in self.z.iter().zip(&self.u) {
            s.push_str(&crate::grid::fmt17(*z));
            s.push(',');
            s.push_str(&crate::grid::fmt17(*u));
            s.push('\n');
        }
        s
    }
}

/// Solves `U'' + f(U) = 0` on `[-half_width, half_width]` by Newton iteration
/// on the centered-difference discretization with `n` intervals (`n` even).
/// The far boundary value comes from the closed-form tail. The phase is
/// pinned by solving on the right half with `U(0) = 1/2` and reflecting
/// through `U(-z) = 1 - U(z)`; the full-line problem is almost translation
/// invariant, and its near-null Jacobian would otherwise amplify rounding.
pub fn solve_profile_bvp(half_width: f64, n: usize) -> Result<ProfileTable> {
    if half_width < 10.0 || n < 100 || n % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "profile solver needs half_width >= 10 and an even n >= 100 (got {half_width}, {n})"
        )));
    }
    const MAX_NEWTON: usize = 50;
    let dz = 2.0 * half_width / n as f64;
    let inv_dz2 = 1.0 / (dz * dz);
    let half = n / 2;
    let zr: Vec<f64> = (0..=half).map(|k| k as f64 * dz).collect();

    // Deliberately not the exact profile: a steeper logistic.
    let mut u: Vec<f64> = zr.iter().map(|&z| 0.5 * (1.0 - z.tanh())).collect();
    u[0] = 0.5;
    u[half] = standing_profile(half_width);

    let m = half - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=MAX_NEWTON {
        iterations = it;
        for k in 1..half {
            let r = (u[k - 1] - 2.0 * u[k] + u[k + 1]) * inv_dz2 + f_bistable(u[k]);
            rhs[k - 1] = -r;
            lower[k - 1] = inv_dz2;
            upper[k - 1] = inv_dz2;
            diag[k - 1] = -2.0 * inv_dz2 + f_prime(u[k]);
        }
        let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        let step = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        for k in 1..half {
            u[k] += delta[k - 1];
        }
        if !step.is_finite() {
            break;
        }
        if step < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolverFailure(format!(
            "profile Newton iteration did not converge in {MAX_NEWTON} steps"
        )));
    }

    let z = (0..=n).map(|k| -half_width + k as f64 * dz).collect();
    let full = (0..=n)
        .map(|k| if k >= half { u[k - half] } else { 1.0 - u[half - k] })
        .collect();
    Ok(ProfileTable {
        z,
        u: full,
        newton_iterations: iterations,
    })
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::SolverFailure("singular tridiagonal system".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::SolverFailure("singular tridiagonal system".into()));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Haptotactic sensitivity `chi(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChiSpec {
    /// `coef * v`
    Linear { coef: f64 },
    /// `coef * ln(1 + v)`
    Log1p { coef: f64 },
    /// `sum_k coeffs[k] v^k`
    Polynomial { coeffs: Vec<f64> },
    /// Haptotaxis switched off. Only for control runs: violates `chi' > 0`.
    Constant { value: f64 },
}

impl Default for ChiSpec {
    fn default() -> Self {
        ChiSpec::Linear { coef: 1.0 }
    }
}

impl ChiSpec {
    /// `(chi, chi', chi'')` at `v`.
    pub fn eval(&self, v: f64) -> (f64, f64, f64) {
        match self {
            ChiSpec::Linear { coef } => (coef * v, *coef, 0.0),
            ChiSpec::Log1p { coef } => {
                let w = 1.0 + v;
                (coef * w.ln(), coef / w, -coef / (w * w))
            }
            ChiSpec::Polynomial { coeffs } => {
                let (mut c, mut d, mut s) = (0.0, 0.0, 0.0);
                for a in coeffs.iter().rev() {
                    s = s * v + 2.0 * d;
                    d = d * v + c;
                    c = c * v + a;
                }
                (c, d, s)
            }
            ChiSpec::Constant { value } => (*value, 0.0, 0.0),
        }
    }

    #[inline]
    pub fn value(&self, v: f64) -> f64 {
        match self {
            ChiSpec::Linear { coef } => coef * v,
            _ => self.eval(v).0,
        }
    }

    pub fn is_inert(&self) -> bool {
        matches!(self, ChiSpec::Constant { .. })
    }

    /// Checks `chi > 0` and `chi' > 0` on `(0, v_max]` by sampling.
    pub fn validate(&self, v_max: f64) -> Result<()> {
        if self.is_inert() {
            return Ok(());
        }
        if !(v_max > 0.0) {
            return Err(Error::InvalidParams(format!("v_max must be positive, got {v_max}")));
        }
        const SAMPLES: usize = 2000;
        for k in 1..=SAMPLES {
            let v = v_max * k as f64 / SAMPLES as f64;
            let (c, d, _) = self.eval(v);
            if !(c > 0.0 && d > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "chi must satisfy chi > 0 and chi' > 0 on (0, {v_max}]; at v = {v}: chi = {c}, chi' = {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Threshold `b` of the spectral margin: `f' <= -m_f` whenever the profile
/// value lies in `[0, b]` or `[1 - b, 1]`. `f'` changes sign at
/// `(3 - sqrt 3) / 6 ~ 0.211`, so `b` has to stay below that.
pub const SPECTRAL_THRESHOLD: f64 = 0.1;

/// Default sample count for the sup of `|f| + |f'| + |f''|` on `[-1, 2]`.
pub const F_BOUND_SAMPLES: usize = 1_000_000;

const EPS0_SHRINK_BUDGET: usize = 200;

/// Constants of the envelope construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub beta: f64,
    pub sigma: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eps0: f64,
    pub d0: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "F")]
    pub f_bound: f64,
    pub m_f: f64,
    pub a1: f64,
    pub b: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// `sup_{-1 <= z <= 2} |f| + |f'| + |f''|` over `samples + 1` evenly spaced points.
pub fn f_sup_bound(samples: usize) -> f64 {
    (0..=samples)
        .map(|k| {
            let z = -1.0 + 3.0 * k as f64 / samples as f64;
            f_bistable(z).abs() + f_prime(z).abs() + f_second(z).abs()
        })
        .fold(0.0, f64::max)
}

pub fn envelope_constants(t_final: f64, d0: f64, eps0: f64, k: f64) -> Result<EnvelopeConstants> {
    envelope_constants_with(t_final, d0, eps0, k, F_BOUND_SAMPLES)
}

pub fn envelope_constants_with(
    t_final: f64,
    d0: f64,
    eps0: f64,
    k: f64,
    f_samples: usize,
) -> Result<EnvelopeConstants> {
    if !(t_final > 0.0 && d0 > 0.0 && eps0 > 0.0 && k > 1.0) {
        return Err(Error::InvalidParams(format!(
            "envelope constants need T > 0, d0 > 0, eps0 > 0, K > 1 (got T = {t_final}, d0 = {d0}, eps0 = {eps0}, K = {k})"
        )));
    }
    let b = SPECTRAL_THRESHOLD;
    let f_bound = f_sup_bound(f_samples);
    // f' increases on [0, 1/2] and is symmetric about 1/2.
    let m_f = -f_prime(b).max(f_prime(1.0 - b));
    if !(m_f > 0.0) {
        return Err(Error::ConstantsInfeasible(format!("no spectral margin at b = {b}")));
    }
    // -U0' = U0 (1 - U0) / sqrt 2 is smallest at the ends of {U0 in [b, 1-b]}.
    let a1 = PROFILE_DECAY * b * (1.0 - b);
    let beta = m_f / 4.0;
    let sigma0 = a1 / (m_f + f_bound);
    let sigma1 = 1.0 / (beta + 1.0);
    let sigma2 = 4.0 * beta / (f_bound * (beta + 1.0));
    let sigma = 0.9 * sigma0.min(sigma1).min(sigma2);

    let mut e0 = eps0;
    for _ in 0..EPS0_SHRINK_BUDGET {
        let ratio = d0 / (4.0 * e0);
        if ratio > 1.0 {
            let l = ratio.ln() / t_final;
            let elt = (l * t_final).exp();
            let growth_ok = e0 * e0 * l * elt <= 1.0;
            let width_ok = elt + k <= d0 / (2.0 * e0);
            if growth_ok && width_ok {
                return Ok(EnvelopeConstants {
                    beta,
                    sigma,
                    l,
                    k,
                    eps0: e0,
                    d0,
                    t_final,
                    f_bound,
                    m_f,
                    a1,
                    b,
                    sigma0,
                    sigma1,
                    sigma2,
                });
            }
        }
        e0 *= 0.5;
        if !(e0 > 0.0) {
            break;
        }
    }
    Err(Error::ConstantsInfeasible(format!(
        "no eps0 <= {eps0} satisfies the growth and width constraints for T = {t_final}, d0 = {d0}, K = {k}"
    )))
}

impl EnvelopeConstants {
    /// `(p(t), q(t))` of the envelope offsets.
    pub fn p_q(&self, t: f64, eps: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.t_final * (1.0 + 1e-12)).contains(&t) || !(eps > 0.0 && eps <= self.eps0) {
            return Err(Error::InvalidParams(format!(
                "envelope offsets need 0 <= t <= T = {} and 0 < eps <= eps0 = {} (got t = {t}, eps = {eps})",
                self.t_final, self.eps0
            )));
        }
        let decay = (-self.beta * t / (eps * eps)).exp();
        let growth = (self.l * t).exp();
        let p = -decay + growth + self.k;
        let q = self.sigma * (self.beta * decay + eps * eps * self.l * growth);
        Ok((p, q))
    }

    /// `dp/dt`.
    pub fn p_rate(&self, t: f64, eps: f64) -> f64 {
        self.beta / (eps * eps) * (-self.beta * t / (eps * eps)).exp() + self.l * (self.l * t).exp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

pub fn envelope_p_q(t: f64, eps: f64, c: &EnvelopeConstants) -> Result<(f64, f64)> {
    c.p_q(t, eps)
}
