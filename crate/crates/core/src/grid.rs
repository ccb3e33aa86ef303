//! Uniform cell-centered grid, scalar/vector fields and the discrete
//! operators shared by both solvers.
//!
//! Samples live at cell centers `origin + ((i + 1/2) h, (j + 1/2) h)` and are
//! stored row-major (`j * nx + i`). Homogeneous Neumann walls are realized by a
//! single ring of ghost cells that mirror the adjacent interior cell, so every
//! discrete normal difference across a wall is exactly zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum cell count per axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {nx} x {ny}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { nx, ny, h, origin })
    }

    /// `n x n` cells covering the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0 / n as f64, [0.0, 0.0])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.h
    }

    /// Upper-right corner of the rectangle.
    pub fn upper(&self) -> [f64; 2] {
        [self.origin[0] + self.width(), self.origin[1] + self.height()]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let up = self.upper();
        p[0] >= self.origin[0] && p[0] <= up[0] && p[1] >= self.origin[1] && p[1] <= up[1]
    }

    /// Distance from `p` to the nearest wall (negative outside).
    pub fn wall_clearance(&self, p: [f64; 2]) -> f64 {
        let up = self.upper();
        (p[0] - self.origin[0])
            .min(up[0] - p[0])
            .min(p[1] - self.origin[1])
            .min(up[1] - p[1])
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

/// Rectangle that grids of different resolution share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(default)]
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0],
            width: 1.0,
            height: 1.0,
        }
    }
}

impl Domain {
    /// `n` cells across the width; the height must be a whole number of cells.
    pub fn grid(&self, n: usize) -> Result<Grid> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain sides must be positive, got {} x {}",
                self.width, self.height
            )));
        }
        let h = self.width / n as f64;
        let rows = self.height / h;
        let ny = rows.round();
        if (rows - ny).abs() > 1e-9 * rows.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "height {} is not a whole number of cells of size {h}",
                self.height
            )));
        }
        Grid::new(n, ny as usize, h, self.origin)
    }

    /// Coarsest grid with `h <= h_max`, up to relative round-off in the ratio.
    pub fn resolving(&self, h_max: f64) -> Result<Grid> {
        if !(h_max > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing bound must be positive, got {h_max}")));
        }
        let cells = self.width / h_max;
        let n = if (cells - cells.round()).abs() <= 1e-9 * cells { cells.round() } else { cells.ceil() };
        self.grid(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [x, y] = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Sum of samples times cell area.
    pub fn integral(&self) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        self.values.iter().sum::<f64>() * h2
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.same_shape(&other.grid));
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        debug_assert!(self.grid.same_shape(&other.grid));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Value with ghost reflection for indices one step outside the grid.
    #[inline]
    pub fn ghosted(&self, i: isize, j: isize) -> f64 {
        let ii = i.clamp(0, self.grid.nx as isize - 1) as usize;
        let jj = j.clamp(0, self.grid.ny as isize - 1) as usize;
        self.at(ii, jj)
    }

    /// Padded `(nx + 2) x (ny + 2)` copy including the mirrored ghost ring.
    pub fn with_ghosts(&self) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let mut out = Vec::with_capacity(((nx + 2) * (ny + 2)) as usize);
        for j in -1..=ny {
            for i in -1..=nx {
                out.push(self.ghosted(i, j));
            }
        }
        out
    }

    /// Block-average onto a grid coarser by `factor` (cell averages nest exactly).
    pub fn restrict(&self, factor: usize) -> Result<ScalarField> {
        let g = self.grid;
        if factor == 0 || g.nx % factor != 0 || g.ny % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot restrict {}x{} by {factor}",
                g.nx, g.ny
            )));
        }
        let coarse = Grid::new(g.nx / factor, g.ny / factor, g.h * factor as f64, g.origin)?;
        let w = 1.0 / (factor * factor) as f64;
        let mut out = ScalarField::zeros(coarse);
        for j in 0..coarse.ny {
            for i in 0..coarse.nx {
                let mut s = 0.0;
                for b in 0..factor {
                    for a in 0..factor {
                        s += self.at(i * factor + a, j * factor + b);
                    }
                }
                out.values[coarse.idx(i, j)] = s * w;
            }
        }
        Ok(out)
    }

    /// Sample this field at the cell centers of `target` by bilinear interpolation.
    pub fn resample(&self, target: Grid) -> Result<ScalarField> {
        let mut values = Vec::with_capacity(target.len());
        for j in 0..target.ny {
            for i in 0..target.nx {
                values.push(interpolate_bilinear(self, target.center(i, j))?);
            }
        }
        Ok(ScalarField {
            grid: target,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [x, y] = grid.center(i, j);
                let k = grid.idx(i, j);
                let v = f(x, y);
                out.x[k] = v[0];
                out.y[k] = v[1];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .fold(0.0, |acc, (a, b)| acc.max(a.hypot(*b)))
    }

    pub fn scale(&mut self, c: &[f64]) {
        for ((x, y), s) in self.x.iter_mut().zip(self.y.iter_mut()).zip(c) {
            *x *= s;
            *y *= s;
        }
    }
}

/// Five-point Laplacian with mirrored ghosts (homogeneous Neumann).
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid);
    laplacian_neumann_into(&f.values, f.grid, &mut out.values);
    out
}

pub fn laplacian_neumann_into(f: &[f64], g: Grid, out: &mut [f64]) {
    neumann_stencil(f, g, 0.0, 1.0 / (g.h * g.h), out);
}

/// `out = a f + c S f` where `S f` sums the four neighbour differences with
/// mirrored ghosts, so `S f / h^2` is the Neumann Laplacian.
pub(crate) fn neumann_stencil(f: &[f64], g: Grid, a: f64, c: f64, out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        let down = &f[j.saturating_sub(1) * nx..][..nx];
        let up = &f[(j + 1).min(ny - 1) * nx..][..nx];
        let o = &mut out[j * nx..(j + 1) * nx];
        let edge = |i: usize| {
            let x = row[i];
            let w = if i > 0 { row[i - 1] } else { x };
            let e = if i + 1 < nx { row[i + 1] } else { x };
            a * x + c * ((w - x) + (e - x) + (down[i] - x) + (up[i] - x))
        };
        o[0] = edge(0);
        if nx > 1 {
            o[nx - 1] = edge(nx - 1);
        }
        for i in 1..nx.saturating_sub(1) {
            let x = row[i];
            o[i] = a * x + c * ((row[i - 1] - x) + (row[i + 1] - x) + (down[i] - x) + (up[i] - x));
        }
    }
}

/// Centered differences; at the boundary ring the mirrored ghost makes the
/// stencil one-sided with half weight.
pub fn gradient_centered(f: &ScalarField) -> VectorField {
    let mut out = VectorField::zeros(f.grid);
    gradient_centered_into(&f.values, f.grid, &mut out.x, &mut out.y);
    out
}

pub fn gradient_centered_into(f: &[f64], g: Grid, gx: &mut [f64], gy: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let inv_2h = 0.5 / g.h;
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let w = if i > 0 { f[k - 1] } else { f[k] };
            let e = if i + 1 < nx { f[k + 1] } else { f[k] };
            let s = if j > 0 { f[k - nx] } else { f[k] };
            let n = if j + 1 < ny { f[k + nx] } else { f[k] };
            gx[k] = (e - w) * inv_2h;
            gy[k] = (n - s) * inv_2h;
        }
    }
}

/// Conservative discretization of `div(u w)`.
///
/// Face velocities are the average of the adjacent cell-centered `w`
/// components, face densities are upwinded on the sign of the face velocity,
/// and wall faces carry no flux.
pub fn advective_divergence(u: &ScalarField, w: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros(u.grid);
    advective_divergence_into(&u.values, &w.x, &w.y, u.grid, &mut out.values);
    out
}

pub fn advective_divergence_into(u: &[f64], wx: &[f64], wy: &[f64], g: Grid, out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let inv_h = 1.0 / g.h;
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            let k = row + i;
            let wf = 0.5 * (wx[k] + wx[k + 1]);
            let uf = if wf > 0.0 { u[k] } else { u[k + 1] };
            let flux = uf * wf * inv_h;
            out[k] += flux;
            out[k + 1] -= flux;
        }
    }
    for j in 0..ny - 1 {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let wf = 0.5 * (wy[k] + wy[k + nx]);
            let uf = if wf > 0.0 { u[k] } else { u[k + nx] };
            let flux = uf * wf * inv_h;
            out[k] += flux;
            out[k + nx] -= flux;
        }
    }
}

#[inline]
fn cell_coords(g: &Grid, p: [f64; 2]) -> Result<(f64, f64)> {
    if !g.contains(p) {
        return Err(Error::OutOfDomain { x: p[0], y: p[1] });
    }
    Ok((
        (p[0] - g.origin[0]) / g.h - 0.5,
        (p[1] - g.origin[1]) / g.h - 0.5,
    ))
}

/// Bilinear interpolation of cell-center samples. Within half a cell of a
/// wall the boundary cell pair is extended linearly, so affine fields are
/// reproduced exactly everywhere in the rectangle.
pub fn interpolate_bilinear(f: &ScalarField, p: [f64; 2]) -> Result<f64> {
    let g = f.grid;
    let (sx, sy) = cell_coords(&g, p)?;
    let i0 = (sx.floor() as isize).clamp(0, g.nx as isize - 2) as usize;
    let j0 = (sy.floor() as isize).clamp(0, g.ny as isize - 2) as usize;
    let tx = sx - i0 as f64;
    let ty = sy - j0 as f64;
    let f00 = f.at(i0, j0);
    let f10 = f.at(i0 + 1, j0);
    let f01 = f.at(i0, j0 + 1);
    let f11 = f.at(i0 + 1, j0 + 1);
    Ok((1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11))
}

/// Cubic Lagrange weights (and their derivatives) for nodes -1, 0, 1, 2.
#[inline]
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
    let w = [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ];
    let dw = [
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ];
    (w, dw)
}

fn cubic_second_weights(t: f64) -> [f64; 4] {
    let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
    [-(b + c + d) / 3.0, a + c + d, -(a + b + d), (a + b + c) / 3.0]
}

/// Tensor-product cubic Lagrange interpolation on the 4x4 stencil around `p`,
/// returning the value and gradient. Fourth-order accurate for smooth fields.
pub fn interpolate_cubic(f: &ScalarField, p: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let g = f.grid;
    let (sx, sy) = cell_coords(&g, p)?;
    // Truncation differs from floor only below zero, where the clamp wins.
    let i0 = (sx as isize).clamp(1, g.nx as isize - 3);
    let j0 = (sy as isize).clamp(1, g.ny as isize - 3);
    let (wx, dwx) = cubic_weights(sx - i0 as f64);
    let (wy, dwy) = cubic_weights(sy - j0 as f64);
    let mut val = 0.0;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for b in 0..4 {
        let j = (j0 - 1 + b as isize) as usize;
        let row = &f.values[j * g.nx + (i0 - 1) as usize..][..4];
        let mut row_v = 0.0;
        let mut row_d = 0.0;
        for a in 0..4 {
            let v = row[a];
            row_v += wx[a] * v;
            row_d += dwx[a] * v;
        }
        val += wy[b] * row_v;
        gx += wy[b] * row_d;
        gy += dwy[b] * row_v;
    }
    Ok((val, [gx / g.h, gy / g.h]))
}

/// As [`interpolate_cubic`], also returning the Hessian `[fxx, fxy, fyy]`.
pub fn interpolate_cubic_hessian(f: &ScalarField, p: [f64; 2]) -> Result<(f64, [f64; 2], [f64; 3])> {
    let g = f.grid;
    let (sx, sy) = cell_coords(&g, p)?;
    // Truncation differs from floor only below zero, where the clamp wins.
    let i0 = (sx as isize).clamp(1, g.nx as isize - 3);
    let j0 = (sy as isize).clamp(1, g.ny as isize - 3);
    let (wx, dwx) = cubic_weights(sx - i0 as f64);
    let (wy, dwy) = cubic_weights(sy - j0 as f64);
    let ddwx = cubic_second_weights(sx - i0 as f64);
    let ddwy = cubic_second_weights(sy - j0 as f64);
    let (mut val, mut gx, mut gy, mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for b in 0..4 {
        let j = (j0 - 1 + b as isize) as usize;
        let row = &f.values[j * g.nx + (i0 - 1) as usize..][..4];
        let (mut rv, mut rd, mut rdd) = (0.0, 0.0, 0.0);
        for a in 0..4 {
            rv += wx[a] * row[a];
            rd += dwx[a] * row[a];
            rdd += ddwx[a] * row[a];
        }
        val += wy[b] * rv;
        gx += wy[b] * rd;
        gy += dwy[b] * rv;
        hxx += wy[b] * rdd;
        hxy += dwy[b] * rd;
        hyy += ddwy[b] * rv;
    }
    let (ih, ih2) = (1.0 / g.h, 1.0 / (g.h * g.h));
    Ok((val, [gx * ih, gy * ih], [hxx * ih2, hxy * ih2, hyy * ih2]))
}

/// Decimal rendering with 17 significant digits (lossless for f64).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

const SNAPSHOT_MAGIC: &str = "# haptolab-snapshot v1";

/// Header data carried by a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub name: String,
    pub time: f64,
}

pub fn snapshot_to_csv(f: &ScalarField, name: &str, time: f64) -> String {
    let g = f.grid;
    let mut s = String::with_capacity(g.len() * 24 + 256);
    let _ = writeln!(s, "{SNAPSHOT_MAGIC}");
    let _ = writeln!(s, "# field={name}");
    let _ = writeln!(s, "# nx={}", g.nx);
    let _ = writeln!(s, "# ny={}", g.ny);
    let _ = writeln!(s, "# h={}", fmt17(g.h));
    let _ = writeln!(s, "# origin={},{}", fmt17(g.origin[0]), fmt17(g.origin[1]));
    let _ = writeln!(s, "# time={}", fmt17(time));
    for j in 0..g.ny {
        for i in 0..g.nx {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&fmt17(f.at(i, j)));
        }
        s.push('\n');
    }
    s
}

pub fn snapshot_from_csv(text: &str) -> Result<(ScalarField, SnapshotMeta)> {
    let bad = |m: &str| Error::Config(format!("malformed snapshot: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_MAGIC) {
        return Err(bad("missing header line"));
    }
    let mut name = None;
    let mut nx = None;
    let mut ny = None;
    let mut h = None;
    let mut origin = None;
    let mut time = None;
    let mut values = Vec::new();
    for line in lines {
        if let Some(kv) = line.strip_prefix("# ") {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(line))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(line));
            match k {
                "field" => name = Some(v.to_string()),
                "nx" => nx = Some(v.trim().parse::<usize>().map_err(|_| bad(line))?),
                "ny" => ny = Some(v.trim().parse::<usize>().map_err(|_| bad(line))?),
                "h" => h = Some(num(v)?),
                "time" => time = Some(num(v)?),
                "origin" => {
                    let (a, b) = v.split_once(',').ok_or_else(|| bad(line))?;
                    origin = Some([num(a)?, num(b)?]);
                }
                _ => return Err(bad(line)),
            }
        } else if !line.trim().is_empty() {
            for tok in line.split(',') {
                values.push(tok.trim().parse::<f64>().map_err(|_| bad(tok))?);
            }
        }
    }
    let grid = Grid::new(
        nx.ok_or_else(|| bad("nx"))?,
        ny.ok_or_else(|| bad("ny"))?,
        h.ok_or_else(|| bad("h"))?,
        origin.ok_or_else(|| bad("origin"))?,
    )?;
    let field = ScalarField::from_values(grid, values)?;
    Ok((
        field,
        SnapshotMeta {
            name: name.ok_or_else(|| bad("field"))?,
            time: time.ok_or_else(|| bad("time"))?,
        },
    ))
}

pub fn write_snapshot(path: &Path, f: &ScalarField, name: &str, time: f64) -> Result<()> {
    fs::write(path, snapshot_to_csv(f, name, time)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, SnapshotMeta)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    snapshot_from_csv(&text)
}
