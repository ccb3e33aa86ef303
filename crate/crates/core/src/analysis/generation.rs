//! Early-time generation of the interface from the initial datum.

use serde::{Deserialize, Serialize};

use crate::bistable::MU;
use crate::diffuse::{DiffuseState, Trajectory};
use crate::error::{Error, Result};

/// Generation time `eps^2 |ln eps| / mu`.
pub fn generation_time(eps: f64) -> f64 {
    eps * eps * eps.ln().abs() / MU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub eps: f64,
    pub t_star: f64,
    pub eta: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    /// Grid points with `u` outside `[-eta, 1 + eta]`.
    pub violations_a: usize,
    /// Grid points where `u0 >= 1/2 + M0 eps` but `u < 1 - eta`, or
    /// `u0 <= 1/2 - M0 eps` but `u > eta`.
    pub violations_b: usize,
    pub u_sup: f64,
    pub u_inf: f64,
}

impl GenerationReport {
    pub fn passed(&self) -> bool {
        self.violations_a == 0 && self.violations_b == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

fn validate(eps: f64, eta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParams(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(eta > 0.0 && eta < 0.25) {
        return Err(Error::InvalidParams(format!("eta must lie in (0, 1/4), got {eta}")));
    }
    Ok(())
}

/// Initial state and the state at the generation time.
fn endpoints(traj: &Trajectory<DiffuseState>, eps: f64) -> Result<(&DiffuseState, &DiffuseState)> {
    let first = traj
        .states
        .first()
        .ok_or(Error::MissingSnapshot { t: 0.0 })?;
    let at = traj.at(first.t + generation_time(eps))?;
    Ok((first, at))
}

/// Counts violations of the generation bounds at `t* = eps^2 |ln eps| / mu`
/// after the first recorded state.
pub fn check_generation(traj: &Trajectory<DiffuseState>, eps: f64, eta: f64, m0: f64) -> Result<GenerationReport> {
    validate(eps, eta)?;
    if !(m0 >= 0.0) {
        return Err(Error::InvalidParams(format!("M0 must be nonnegative, got {m0}")));
    }
    let (first, at) = endpoints(traj, eps)?;
    let mut violations_a = 0;
    let mut violations_b = 0;
    for (&u0, &u) in first.u.values.iter().zip(&at.u.values) {
        if !(u >= -eta && u <= 1.0 + eta) {
            violations_a += 1;
        }
        if (u0 >= 0.5 + m0 * eps && u < 1.0 - eta) || (u0 <= 0.5 - m0 * eps && u > eta) {
            violations_b += 1;
        }
    }
    Ok(GenerationReport {
        eps,
        t_star: generation_time(eps),
        eta,
        m0,
        violations_a,
        violations_b,
        u_sup: at.u.max(),
        u_inf: at.u.min(),
    })
}

/// Supremum of `|u0 - 1/2| / eps` over grid points that end on the wrong side
/// of `1 - eta` or `eta` at `t*`. Any `M0` above it gives no violations of
/// the second kind; zero when every point is captured.
pub fn critical_m0(traj: &Trajectory<DiffuseState>, eps: f64, eta: f64) -> Result<f64> {
    validate(eps, eta)?;
    let (first, at) = endpoints(traj, eps)?;
    let mut worst: f64 = 0.0;
    for (&u0, &u) in first.u.values.iter().zip(&at.u.values) {
        if (u0 >= 0.5 && u < 1.0 - eta) || (u0 <= 0.5 && u > eta) {
            worst = worst.max((u0 - 0.5).abs() / eps);
        }
    }
    Ok(worst)
}

/// Smallest multiple of `step` strictly above [`critical_m0`].
pub fn fit_m0(traj: &Trajectory<DiffuseState>, eps: f64, eta: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("M0 grid step must be positive, got {step}")));
    }
    let m = critical_m0(traj, eps, eta)?;
    Ok(((m / step).floor() + 1.0) * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bistable::f_bistable;
    use crate::diffuse::run_diffuse;
    use crate::grid::{Grid, ScalarField};
    use crate::diffuse::HaptoParams;

    fn params(eps: f64) -> HaptoParams {
        HaptoParams {
            eps,
            lambda: 1.0,
            alpha: 1.0,
            chi: Default::default(),
            c0: 10.0,
        }
    }

    fn uniform_run(u0: f64, eps: f64) -> Trajectory<DiffuseState> {
        let g = Grid::unit_square(12).unwrap();
        let s = DiffuseState::new(
            ScalarField::from_fn(g, |_, _| u0),
            ScalarField::from_fn(g, |_, _| 1.0),
            ScalarField::zeros(g),
        )
        .unwrap();
        let ts = generation_time(eps);
        run_diffuse(s, &params(eps), ts, &[ts]).unwrap()
    }

    /// `u' = f(u) / eps^2` by RK4 with a step far below the reaction scale.
    fn scalar_ode(u0: f64, eps: f64, t: f64) -> f64 {
        let n = 200_000;
        let h = t / n as f64;
        let r = |u: f64| f_bistable(u) / (eps * eps);
        let mut u = u0;
        for _ in 0..n {
            let k1 = r(u);
            let k2 = r(u + 0.5 * h * k1);
            let k3 = r(u + 0.5 * h * k2);
            let k4 = r(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        u
    }

    #[test]
    fn generation_time_formula() {
        let eps: f64 = 0.02;
        assert!((generation_time(eps) - 4.0 * eps * eps * eps.ln().abs()).abs() < 1e-18);
    }

    #[test]
    fn equilibrium_has_no_violations() {
        let traj = uniform_run(1.0, 0.05);
        for (eta, m0) in [(0.01, 0.0), (0.1, 1.0), (0.2, 5.0)] {
            let r = check_generation(&traj, 0.05, eta, m0).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!((r.u_sup - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_datum_follows_scalar_ode() {
        let (eps, m0, eta) = (0.05, 0.7, 0.1);
        let u0 = 0.5 + 2.0 * m0 * eps;
        let traj = uniform_run(u0, eps);
        let oracle = scalar_ode(u0, eps, generation_time(eps));
        assert!(oracle > 1.0 - eta);
        let r = check_generation(&traj, eps, eta, m0).unwrap();
        assert!((r.u_sup - oracle).abs() < 1e-6, "{} vs {oracle}", r.u_sup);
        assert!((r.u_inf - oracle).abs() < 1e-6);
        assert!(r.passed());
    }

    #[test]
    fn slow_start_is_reported() {
        // Too close to 1/2 to reach 1 - eta by t*.
        let (eps, eta) = (0.05, 0.1);
        let traj = uniform_run(0.5 + 0.1 * eps, eps);
        let r = check_generation(&traj, eps, eta, 0.05).unwrap();
        assert_eq!(r.violations_b, 144);
        assert!((critical_m0(&traj, eps, eta).unwrap() - 0.1).abs() < 1e-12);
        let m = fit_m0(&traj, eps, eta, 0.05).unwrap();
        assert!((m - 0.15).abs() < 1e-12);
        assert!(check_generation(&traj, eps, eta, m).unwrap().passed());
    }

    #[test]
    fn missing_snapshot_is_an_error() {
        let g = Grid::unit_square(8).unwrap();
        let s = DiffuseState::new(ScalarField::zeros(g), ScalarField::from_fn(g, |_, _| 1.0), ScalarField::zeros(g)).unwrap();
        let traj = Trajectory { states: vec![s] };
        assert!(matches!(check_generation(&traj, 0.05, 0.1, 1.0), Err(Error::MissingSnapshot { .. })));
        assert!(check_generation(&traj, 0.05, 0.3, 1.0).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn larger_eta_never_adds_violations(eta in 0.01f64..0.24, bump in 0.0f64..0.2, m0 in 0.0f64..3.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let eps = 0.05;
            let g = Grid::unit_square(8).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u0: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let u1: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-0.3..1.3)).collect();
            let ts = generation_time(eps);
            let mk = |u: Vec<f64>, t: f64| DiffuseState {
                t,
                ..DiffuseState::new(ScalarField::from_values(g, u).unwrap(), ScalarField::from_fn(g, |_, _| 1.0), ScalarField::zeros(g)).unwrap()
            };
            let traj = Trajectory { states: vec![mk(u0, 0.0), mk(u1, ts)] };
            let eta2 = (eta + bump).min(0.249);
            let a = check_generation(&traj, eps, eta, m0).unwrap();
            let b = check_generation(&traj, eps, eta2, m0).unwrap();
            proptest::prop_assert!(b.violations_a <= a.violations_a);
            proptest::prop_assert!(b.violations_b <= a.violations_b);
        }
    }
}
