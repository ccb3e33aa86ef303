//! Level-curve extraction and distances between curves.

use crate::curve::{InterfaceCurve, SegmentIndex};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Closed components of a level set; `curve` is the longest one.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCurves {
    pub curve: InterfaceCurve,
    pub others: Vec<InterfaceCurve>,
}

impl LevelCurves {
    pub fn components(&self) -> usize {
        1 + self.others.len()
    }

    pub fn all(&self) -> impl Iterator<Item = &InterfaceCurve> {
        std::iter::once(&self.curve).chain(&self.others)
    }

    pub fn into_vec(self) -> Vec<InterfaceCurve> {
        let mut v = vec![self.curve];
        v.extend(self.others);
        v
    }
}

const NONE: u32 = u32::MAX;

/// Marching squares on the dual grid of cell centers with linear
/// interpolation along edges, so every vertex reproduces `level` under
/// bilinear interpolation. Ambiguous saddles are resolved by the mean of the
/// four corners. Components are oriented counter-clockwise.
pub fn extract_level_curve(f: &ScalarField, level: f64) -> Result<LevelCurves> {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    if !(level > f.min() && level < f.max()) {
        return Err(Error::EmptyInterface { level });
    }
    let above = |i: usize, j: usize| f.at(i, j) > level;
    // Edge ids: 2 k for the edge from node k towards +x, 2 k + 1 towards +y.
    let h_edge = |i: usize, j: usize| 2 * (j * nx + i);
    let v_edge = |i: usize, j: usize| 2 * (j * nx + i) + 1;
    let mut edge_point: Vec<[f64; 2]> = vec![[0.0; 2]; 2 * nx * ny];
    let mut edge_segs: Vec<[u32; 2]> = vec![[NONE; 2]; 2 * nx * ny];
    let mut segs: Vec<[usize; 2]> = Vec::new();

    let crossing = |a: (usize, usize), b: (usize, usize)| -> [f64; 2] {
        let (fa, fb) = (f.at(a.0, a.1), f.at(b.0, b.1));
        let t = (level - fa) / (fb - fa);
        let pa = g.center(a.0, a.1);
        let pb = g.center(b.0, b.1);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let bits: Vec<bool> = corners.iter().map(|&(a, b)| above(a, b)).collect();
            if bits.iter().all(|&b| b) || bits.iter().all(|&b| !b) {
                continue;
            }
            // Square edges in order bottom, right, top, left.
            let edges = [h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)];
            let mut crossed = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (corners[e], corners[(e + 1) % 4]);
                if bits[e] != bits[(e + 1) % 4] {
                    edge_point[edges[e]] = crossing(a, b);
                    crossed.push(e);
                }
            }
            let pairs: Vec<(usize, usize)> = if crossed.len() == 2 {
                vec![(crossed[0], crossed[1])]
            } else {
                let mean = corners.iter().map(|&(a, b)| f.at(a, b)).sum::<f64>() / 4.0;
                let center_above = mean > level;
                // Cut off the corners whose side differs from the center.
                if bits[0] != center_above {
                    vec![(3, 0), (1, 2)]
                } else {
                    vec![(0, 1), (2, 3)]
                }
            };
            for (a, b) in pairs {
                let s = segs.len();
                segs.push([edges[a], edges[b]]);
                for e in [edges[a], edges[b]] {
                    let slot = &mut edge_segs[e];
                    if slot[0] == NONE {
                        slot[0] = s as u32;
                    } else {
                        slot[1] = s as u32;
                    }
                }
            }
        }
    }

    let mut used = vec![false; segs.len()];
    let mut curves = Vec::new();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let first_edge = segs[start][0];
        let mut pts = vec![edge_point[first_edge]];
        let mut edge = segs[start][1];
        let mut closed = false;
        loop {
            if edge == first_edge {
                closed = true;
                break;
            }
            push_distinct(&mut pts, edge_point[edge]);
            let [s0, s1] = edge_segs[edge];
            let next = [s0, s1]
                .into_iter()
                .find(|&s| s != NONE && !used[s as usize]);
            let Some(next) = next else {
                break;
            };
            let next = next as usize;
            used[next] = true;
            edge = if segs[next][0] == edge { segs[next][1] } else { segs[next][0] };
        }
        if !closed {
            return Err(Error::InvalidCurve(format!(
                "level set {level} reaches the edge of the sampled region"
            )));
        }
        if pts.len() >= 2 && same_point(pts[0], *pts.last().unwrap()) {
            pts.pop();
        }
        if pts.len() < 3 {
            continue;
        }
        let mut c = InterfaceCurve::new(pts, g, level)?;
        c.make_ccw();
        curves.push(c);
    }
    if curves.is_empty() {
        return Err(Error::EmptyInterface { level });
    }
    // Longest first; ties keep extraction order.
    let mut order: Vec<usize> = (0..curves.len()).collect();
    let lengths: Vec<f64> = curves.iter().map(|c| c.length()).collect();
    order.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]));
    let mut slots: Vec<Option<InterfaceCurve>> = curves.into_iter().map(Some).collect();
    let mut it = order.into_iter().map(|k| slots[k].take().unwrap());
    let curve = it.next().unwrap();
    Ok(LevelCurves {
        curve,
        others: it.collect(),
    })
}

fn same_point(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= 1e-14 && (a[1] - b[1]).abs() <= 1e-14
}

fn push_distinct(pts: &mut Vec<[f64; 2]>, p: [f64; 2]) {
    if pts.last().map_or(true, |&q| !same_point(p, q)) {
        pts.push(p);
    }
}

/// Largest distance from a point of `a` (segments subdivided at `h/2`) to the
/// polyline `b`.
pub fn one_sided_sup_distance(a: &InterfaceCurve, b: &InterfaceCurve) -> f64 {
    one_sided_to_index(a, &SegmentIndex::new(&[b]))
}

/// As [`one_sided_sup_distance`] against a prebuilt index.
pub fn one_sided_to_index(a: &InterfaceCurve, b: &SegmentIndex) -> f64 {
    a.subdivided(0.5 * a.grid.h)
        .into_iter()
        .map(|p| b.distance(p))
        .fold(0.0, f64::max)
}

pub fn hausdorff(a: &InterfaceCurve, b: &InterfaceCurve) -> f64 {
    one_sided_sup_distance(a, b).max(one_sided_sup_distance(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{interpolate_bilinear, Grid};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn circle(n: usize, c: [f64; 2], r: f64, g: Grid) -> InterfaceCurve {
        let pts = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                [c[0] + r * th.cos(), c[1] + r * th.sin()]
            })
            .collect();
        InterfaceCurve::new(pts, g, 0.0).unwrap()
    }

    #[test]
    fn extracts_circle_within_h() {
        let g = Grid::unit_square(64).unwrap();
        let r = 0.3;
        let f = ScalarField::from_fn(g, |x, y| (x - 0.5).powi(2) + (y - 0.5).powi(2) - r * r);
        let lc = extract_level_curve(&f, 0.0).unwrap();
        assert_eq!(lc.components(), 1);
        for p in &lc.curve.points {
            let rr = (p[0] - 0.5).hypot(p[1] - 0.5);
            assert!((rr - r).abs() <= g.h);
            assert!(interpolate_bilinear(&f, *p).unwrap().abs() <= 1e-9);
        }
        assert!(lc.curve.signed_area() > 0.0);
        assert!(lc.curve.is_simple());
    }

    #[test]
    fn affine_field_gives_collinear_chain() {
        let g = Grid::unit_square(32).unwrap();
        // A closed curve needs a bounded set; the affine part is checked on
        // the straight stretch of a box-shaped field.
        let f = ScalarField::from_fn(g, |x, y| (x - 0.5).abs().max((y - 0.5).abs()) - 0.3 + 0.0 * y);
        let lc = extract_level_curve(&f, 0.0).unwrap();
        let right: Vec<_> = lc.curve.points.iter().filter(|p| p[0] > 0.75 && (p[1] - 0.5).abs() < 0.2).collect();
        assert!(right.len() > 5);
        for p in right {
            assert!((p[0] - 0.8).abs() <= 1e-9, "{p:?}");
        }
    }

    #[test]
    fn reports_multiple_components_and_empty_sets() {
        let g = Grid::unit_square(64).unwrap();
        let f = ScalarField::from_fn(g, |x, y| {
            let a = (x - 0.3).hypot(y - 0.5) - 0.1;
            let b = (x - 0.7).hypot(y - 0.5) - 0.15;
            a.min(b)
        });
        let lc = extract_level_curve(&f, 0.0).unwrap();
        assert_eq!(lc.components(), 2);
        assert!(lc.curve.centroid()[0] > 0.5);
        assert!(matches!(extract_level_curve(&f, 10.0), Err(Error::EmptyInterface { .. })));
    }

    #[test]
    fn open_level_sets_are_rejected() {
        let g = Grid::unit_square(16).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        assert!(matches!(extract_level_curve(&f, 0.5), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn vertices_interpolate_to_level_on_random_fields() {
        let g = Grid::unit_square(24).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let bump: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-0.01..0.01)).collect();
            let base = ScalarField::from_fn(g, |x, y| (x - 0.5).hypot(y - 0.5) - 0.25);
            let f = ScalarField::from_values(g, base.values.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
            let lc = extract_level_curve(&f, 0.0).unwrap();
            for c in lc.all() {
                for p in &c.points {
                    assert!(interpolate_bilinear(&f, *p).unwrap().abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn distances_between_circles() {
        let g = Grid::new(512, 512, 1.0 / 512.0, [0.0, 0.0]).unwrap();
        let a = circle(4000, [0.5, 0.5], 0.2, g);
        let b = circle(4000, [0.5, 0.5], 0.25, g);
        assert_eq!(hausdorff(&a, &a), 0.0);
        let d = hausdorff(&a, &b);
        assert!((d - 0.05).abs() <= 0.02 * 0.05, "{d}");
        assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
    }

    #[test]
    fn hausdorff_triangle_inequality() {
        let g = Grid::unit_square(128).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut mk = || {
                let c = [rng.gen_range(0.4..0.6), rng.gen_range(0.4..0.6)];
                circle(rng.gen_range(20..200), c, rng.gen_range(0.1..0.3), g)
            };
            let (a, b, c) = (mk(), mk(), mk());
            assert!(hausdorff(&a, &c) <= hausdorff(&a, &b) + hausdorff(&b, &c) + 1e-12);
        }
    }
}
