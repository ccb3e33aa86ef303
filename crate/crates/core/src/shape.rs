//! Initial interface shapes and smooth coefficient fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::InterfaceCurve;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// Closed initial interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    /// Polar curve `r(theta) = r0 + amplitude * cos(k theta)` about `center`.
    Star {
        center: [f64; 2],
        r0: f64,
        amplitude: f64,
        k: u32,
    },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::Circle { radius, center } => {
                if !(radius > 0.0 && center.iter().all(|c| c.is_finite())) {
                    return Err(Error::InvalidInitialData(format!("circle radius must be positive, got {radius}")));
                }
            }
            Shape::Star {
                r0, amplitude, k, center,
            } => {
                if !(r0 > 0.0 && amplitude.abs() < r0 && k >= 1 && center.iter().all(|c| c.is_finite())) {
                    return Err(Error::InvalidInitialData(format!(
                        "star shape needs r0 > |amplitude| and k >= 1 (got r0 = {r0}, amplitude = {amplitude}, k = {k})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Shape::Circle { center, .. } | Shape::Star { center, .. } => center,
        }
    }

    fn radius_at(&self, theta: f64) -> f64 {
        match *self {
            Shape::Circle { radius, .. } => radius,
            Shape::Star { r0, amplitude, k, .. } => r0 + amplitude * (k as f64 * theta).cos(),
        }
    }

    fn point_at(&self, theta: f64) -> [f64; 2] {
        let c = self.center();
        let r = self.radius_at(theta);
        [c[0] + r * theta.cos(), c[1] + r * theta.sin()]
    }

    /// Point and first two parametric derivatives.
    fn jet_at(&self, theta: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (r, dr, ddr) = match *self {
            Shape::Circle { radius, .. } => (radius, 0.0, 0.0),
            Shape::Star { r0, amplitude, k, .. } => {
                let kf = k as f64;
                (
                    r0 + amplitude * (kf * theta).cos(),
                    -amplitude * kf * (kf * theta).sin(),
                    -amplitude * kf * kf * (kf * theta).cos(),
                )
            }
        };
        let (s, c) = theta.sin_cos();
        let ctr = self.center();
        let p = [ctr[0] + r * c, ctr[1] + r * s];
        let d1 = [dr * c - r * s, dr * s + r * c];
        let d2 = [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s];
        (p, d1, d2)
    }

    /// Smallest distance from the curve to the grid walls, over a dense sample.
    pub fn wall_clearance(&self, grid: &Grid) -> f64 {
        (0..4096)
            .map(|k| grid.wall_clearance(self.point_at(2.0 * PI * k as f64 / 4096.0)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Counter-clockwise polyline with `n` vertices at equal parameter steps.
    pub fn polyline(&self, n: usize, grid: Grid) -> Result<InterfaceCurve> {
        let pts = (0..n).map(|k| self.point_at(2.0 * PI * k as f64 / n as f64)).collect();
        InterfaceCurve::new(pts, grid, 0.5)
    }

    /// Signed distance to the curve, negative inside. Exact for circles; for
    /// stars the closest parameter is seeded on a dense sample and polished by
    /// Newton iteration on `(c(theta) - x) . c'(theta) = 0`.
    pub fn signed_distance(&self, x: [f64; 2]) -> f64 {
        let c = self.center();
        let rel = [x[0] - c[0], x[1] - c[1]];
        let rho = rel[0].hypot(rel[1]);
        match *self {
            Shape::Circle { radius, .. } => rho - radius,
            Shape::Star { .. } => {
                let inside = rho < self.radius_at(rel[1].atan2(rel[0]));
                let d = self.unsigned_distance(x);
                if inside {
                    -d
                } else {
                    d
                }
            }
        }
    }

    fn unsigned_distance(&self, x: [f64; 2]) -> f64 {
        const SEEDS: usize = 720;
        let dist2 = |th: f64| {
            let p = self.point_at(th);
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let mut best_th = 0.0;
        let mut best = f64::INFINITY;
        for k in 0..SEEDS {
            let th = 2.0 * PI * k as f64 / SEEDS as f64;
            let d = dist2(th);
            if d < best {
                best = d;
                best_th = th;
            }
        }
        let step = 2.0 * PI / SEEDS as f64;
        let (lo, hi) = (best_th - step, best_th + step);
        let mut th = best_th;
        for _ in 0..30 {
            let (p, d1, d2) = self.jet_at(th);
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let gp = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if gp <= 0.0 {
                break;
            }
            let next = (th - g / gp).clamp(lo, hi);
            if (next - th).abs() < 1e-15 {
                th = next;
                break;
            }
            th = next;
        }
        dist2(th).min(best).sqrt()
    }
}

/// One term `amplitude * cos(i pi X) cos(j pi Y)` in domain-relative coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosMode {
    pub i: u32,
    pub j: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

/// Smooth field `constant + sum cos modes + sum Gaussians`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<CosMode>,
    #[serde(default)]
    pub gaussians: Vec<Gaussian>,
}

impl FieldSpec {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            modes: Vec::new(),
            gaussians: Vec::new(),
        }
    }

    pub fn with_mode(mut self, i: u32, j: u32, amplitude: f64) -> Self {
        self.modes.push(CosMode { i, j, amplitude });
        self
    }

    /// Pure cosine modes have zero normal derivative on the walls.
    pub fn is_neumann_compatible(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn eval(&self, grid: &Grid, x: f64, y: f64) -> f64 {
        let sx = (x - grid.origin[0]) / grid.width();
        let sy = (y - grid.origin[1]) / grid.height();
        let mut v = self.constant;
        for m in &self.modes {
            v += m.amplitude * (m.i as f64 * PI * sx).cos() * (m.j as f64 * PI * sy).cos();
        }
        for g in &self.gaussians {
            let r2 = (x - g.center[0]).powi(2) + (y - g.center[1]).powi(2);
            v += g.amplitude * (-r2 / (g.width * g.width)).exp();
        }
        v
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.eval(&grid, x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_distance_is_exact() {
        let s = Shape::Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        assert!((s.signed_distance([0.5, 0.5]) + 0.25).abs() < 1e-15);
        assert!((s.signed_distance([0.9, 0.5]) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn star_distance_matches_dense_polyline() {
        let s = Shape::Star {
            center: [0.5, 0.5],
            r0: 0.25,
            amplitude: 0.05,
            k: 5,
        };
        s.validate().unwrap();
        let g = Grid::unit_square(64).unwrap();
        let poly = s.polyline(200_000, g).unwrap();
        let idx = crate::curve::SegmentIndex::new(&[&poly]);
        for k in 0..200 {
            let p = [0.1 + 0.8 * (k % 20) as f64 / 19.0, 0.1 + 0.8 * (k / 20) as f64 / 9.0];
            let d = s.signed_distance(p);
            let ref_d = idx.distance(p);
            assert!((d.abs() - ref_d).abs() < 1e-9, "{p:?}: {d} vs {ref_d}");
            assert_eq!(d < 0.0, poly.contains(p));
        }
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(Shape::Circle {
            center: [0.5, 0.5],
            radius: -1.0
        }
        .validate()
        .is_err());
        assert!(Shape::Star {
            center: [0.5, 0.5],
            r0: 0.1,
            amplitude: 0.2,
            k: 3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cosine_fields_are_neumann() {
        let g = Grid::unit_square(32).unwrap();
        let spec = FieldSpec::constant(1.0).with_mode(1, 1, 0.3).with_mode(2, 3, 0.1);
        assert!(spec.is_neumann_compatible());
        let f = spec.sample(g);
        assert!((f.at(3, 5) - spec.eval(&g, g.center(3, 5)[0], g.center(3, 5)[1])).abs() == 0.0);
        // Samples are symmetric about each wall, so the mirrored ghost is exact.
        let h = g.h;
        for k in 0..32 {
            let y = g.center(0, k)[1];
            let left = spec.eval(&g, -0.5 * h, y);
            assert!((left - f.at(0, k)).abs() < 1e-14);
        }
    }
}
