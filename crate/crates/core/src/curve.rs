//! Closed polylines and nearest-segment queries.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Ordered closed polyline; the last vertex connects back to the first and is
/// not repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCurve {
    pub points: Vec<[f64; 2]>,
    pub grid: Grid,
    pub level: f64,
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Closest point on segment `ab` to `p`, with the squared distance.
#[inline]
pub fn segment_foot(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(p, q);
    (q, dot(d, d))
}

impl InterfaceCurve {
    pub fn new(points: Vec<[f64; 2]>, grid: Grid, level: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidCurve(format!(
                "a closed curve needs at least 3 vertices, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::InvalidCurve("non-finite vertex".into()));
        }
        Ok(Self { points, grid, level })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Segments `(p_k, p_{k+1})` including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        (0..n).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise orientation.
    pub fn signed_area(&self) -> f64 {
        0.5 * self.segments().map(|(a, b)| cross(a, b)).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .map(|(a, b)| {
                let d = sub(b, a);
                dot(d, d).sqrt()
            })
            .sum()
    }

    /// Radius of the disk with the same area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area() / std::f64::consts::PI).sqrt()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.segments() {
            let c = cross(p, q);
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    }

    pub fn reverse(&mut self) {
        self.points.reverse();
    }

    /// Reorients to counter-clockwise.
    pub fn make_ccw(&mut self) {
        if self.signed_area() < 0.0 {
            self.reverse();
        }
    }

    /// Winding number of the curve around `p`.
    pub fn winding_number(&self, p: [f64; 2]) -> i32 {
        let mut w = 0;
        for (a, b) in self.segments() {
            if a[1] <= p[1] {
                if b[1] > p[1] && cross(sub(b, a), sub(p, a)) > 0.0 {
                    w += 1;
                }
            } else if b[1] <= p[1] && cross(sub(b, a), sub(p, a)) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.winding_number(p) != 0
    }

    /// Smallest distance from a vertex to the grid walls.
    pub fn wall_clearance(&self) -> f64 {
        self.points
            .iter()
            .map(|&p| self.grid.wall_clearance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no two non-adjacent segments intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        let segs: Vec<_> = self.segments().collect();
        let bbox: Vec<[f64; 4]> = segs
            .iter()
            .map(|(a, b)| [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])])
            .collect();
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (bi, bj) = (bbox[i], bbox[j]);
                if bi[1] < bj[0] || bj[1] < bi[0] || bi[3] < bj[2] || bj[3] < bi[2] {
                    continue;
                }
                if segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Copy whose segments are no longer than `max_len`.
    pub fn subdivided(&self, max_len: f64) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.points.len());
        for (a, b) in self.segments() {
            let d = sub(b, a);
            let pieces = ((dot(d, d).sqrt() / max_len).ceil() as usize).max(1);
            for k in 0..pieces {
                let t = k as f64 / pieces as f64;
                out.push([a[0] + t * d[0], a[1] + t * d[1]]);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for p in self.points.iter().chain(self.points.first()) {
            s.push_str(&crate::grid::fmt17(p[0]));
            s.push(',');
            s.push_str(&crate::grid::fmt17(p[1]));
            s.push('\n');
        }
        s
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], p: [f64; 2], d: f64| {
        d == 0.0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Result of a nearest-segment query.
#[derive(Debug, Clone, Copy)]
pub struct Nearest {
    pub distance: f64,
    pub foot: [f64; 2],
    pub segment: usize,
}

/// Bucket grid over a set of segments for nearest-point queries.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    segs: Vec<([f64; 2], [f64; 2])>,
    origin: [f64; 2],
    cell: f64,
    ncx: usize,
    ncy: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl SegmentIndex {
    pub fn new(curves: &[&InterfaceCurve]) -> Self {
        let segs: Vec<_> = curves.iter().flat_map(|c| c.segments()).collect();
        Self::from_segments(segs)
    }

    pub fn from_segments(segs: Vec<([f64; 2], [f64; 2])>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        let mut total = 0.0;
        for (a, b) in &segs {
            for p in [a, b] {
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
            let d = sub(*b, *a);
            total += dot(d, d).sqrt();
        }
        if segs.is_empty() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let mean = total / segs.len().max(1) as f64;
        let cell = (3.0 * mean).max(extent / 64.0);
        let ncx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ncy = ((hi[1] - lo[1]) / cell).floor() as usize + 1;

        let mut counts = vec![0usize; ncx * ncy + 1];
        let range = |a: [f64; 2], b: [f64; 2]| {
            let i0 = ((a[0].min(b[0]) - lo[0]) / cell).floor().max(0.0) as usize;
            let i1 = (((a[0].max(b[0]) - lo[0]) / cell).floor() as usize).min(ncx - 1);
            let j0 = ((a[1].min(b[1]) - lo[1]) / cell).floor().max(0.0) as usize;
            let j1 = (((a[1].max(b[1]) - lo[1]) / cell).floor() as usize).min(ncy - 1);
            (i0, i1, j0, j1)
        };
        for (a, b) in &segs {
            let (i0, i1, j0, j1) = range(*a, *b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * ncx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; *start.last().unwrap()];
        for (s, (a, b)) in segs.iter().enumerate() {
            let (i0, i1, j0, j1) = range(*a, *b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * ncx + i;
                    items[fill[c]] = s;
                    fill[c] += 1;
                }
            }
        }
        Self {
            segs,
            origin: lo,
            cell,
            ncx,
            ncy,
            start,
            items,
        }
    }

    pub fn segments(&self) -> &[([f64; 2], [f64; 2])] {
        &self.segs
    }

    pub fn nearest(&self, p: [f64; 2]) -> Option<Nearest> {
        self.nearest_within(p, f64::INFINITY)
    }

    /// Nearest segment if one lies within `max_dist` of `p`.
    pub fn nearest_within(&self, p: [f64; 2], max_dist: f64) -> Option<Nearest> {
        if self.segs.is_empty() {
            return None;
        }
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let (ci, cj) = (fx as i64, fy as i64);
        let (nx, ny) = (self.ncx as i64, self.ncy as i64);
        let max_ring = [ci, nx - 1 - ci, cj, ny - 1 - cj]
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap();
        let mut best = max_dist * max_dist;
        let mut found: Option<Nearest> = None;
        let mut r: i64 = 0;
        // Cell rings around `p`: anything beyond ring r is at least r cells away.
        let lower_bound = |r: i64| ((r - 1).max(0) as f64) * self.cell;
        loop {
            if r > max_ring {
                break;
            }
            let lb = lower_bound(r);
            if lb * lb > best {
                break;
            }
            for j in (cj - r)..=(cj + r) {
                if j < 0 || j >= ny {
                    continue;
                }
                let on_edge = j == cj - r || j == cj + r;
                let mut i = ci - r;
                while i <= ci + r {
                    if i >= 0 && i < nx {
                        let c = (j * nx + i) as usize;
                        for &s in &self.items[self.start[c]..self.start[c + 1]] {
                            let (a, b) = self.segs[s];
                            let (q, d2) = segment_foot(p, a, b);
                            if d2 < best || (d2 == best && found.map_or(true, |f| s < f.segment)) {
                                best = d2;
                                found = Some(Nearest {
                                    distance: d2.sqrt(),
                                    foot: q,
                                    segment: s,
                                });
                            }
                        }
                    }
                    i += if on_edge || r == 0 { 1 } else { 2 * r };
                }
            }
            r += 1;
        }
        found.filter(|f| f.distance <= max_dist)
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.nearest(p).map_or(f64::INFINITY, |n| n.distance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn circle(n: usize, c: [f64; 2], r: f64) -> InterfaceCurve {
        let pts = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                [c[0] + r * th.cos(), c[1] + r * th.sin()]
            })
            .collect();
        InterfaceCurve::new(pts, Grid::unit_square(64).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn polygon_geometry() {
        let sq = InterfaceCurve::new(
            vec![[0.2, 0.2], [0.6, 0.2], [0.6, 0.6], [0.2, 0.6]],
            Grid::unit_square(16).unwrap(),
            0.0,
        )
        .unwrap();
        assert!((sq.signed_area() - 0.16).abs() < 1e-15);
        assert!((sq.length() - 1.6).abs() < 1e-15);
        let c = sq.centroid();
        assert!((c[0] - 0.4).abs() < 1e-15 && (c[1] - 0.4).abs() < 1e-15);
        assert!(sq.contains([0.3, 0.5]));
        assert!(!sq.contains([0.7, 0.5]));
        assert!(sq.is_simple());
        assert!((sq.wall_clearance() - 0.2).abs() < 1e-15);
        let bow = InterfaceCurve::new(
            vec![[0.2, 0.2], [0.6, 0.6], [0.6, 0.2], [0.2, 0.6]],
            Grid::unit_square(16).unwrap(),
            0.0,
        )
        .unwrap();
        assert!(!bow.is_simple());
    }

    #[test]
    fn rejects_degenerate_curves() {
        let g = Grid::unit_square(16).unwrap();
        assert!(InterfaceCurve::new(vec![[0.0, 0.0], [1.0, 0.0]], g, 0.0).is_err());
        assert!(InterfaceCurve::new(vec![[0.0, 0.0], [1.0, f64::NAN], [0.5, 0.5]], g, 0.0).is_err());
    }

    #[test]
    fn index_matches_brute_force() {
        let c = circle(500, [0.5, 0.45], 0.3);
        let idx = SegmentIndex::new(&[&c]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)];
            let brute = c
                .segments()
                .map(|(a, b)| segment_foot(p, a, b).1)
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let got = idx.nearest(p).unwrap().distance;
            assert!((got - brute).abs() <= 1e-15, "{p:?}: {got} vs {brute}");
            match idx.nearest_within(p, 0.05) {
                Some(n) => assert!(n.distance <= 0.05 && (n.distance - brute).abs() <= 1e-15),
                None => assert!(brute > 0.05),
            }
        }
    }

    #[test]
    fn subdivision_respects_length() {
        let c = circle(16, [0.5, 0.5], 0.25);
        let pts = c.subdivided(0.01);
        assert!(pts.len() > c.len());
        let n = pts.len();
        for k in 0..n {
            let d = sub(pts[(k + 1) % n], pts[k]);
            assert!(dot(d, d).sqrt() <= 0.01 + 1e-15);
        }
    }

    #[test]
    fn orientation_and_winding() {
        let mut c = circle(64, [0.5, 0.5], 0.2);
        assert!(c.signed_area() > 0.0);
        c.reverse();
        assert!(c.signed_area() < 0.0);
        assert_eq!(c.winding_number([0.5, 0.5]), -1);
        c.make_ccw();
        assert_eq!(c.winding_number([0.5, 0.5]), 1);
        assert_eq!(c.winding_number([0.9, 0.9]), 0);
    }
}
