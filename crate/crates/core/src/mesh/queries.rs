//! Geometric queries: fixed-radius neighbor search on a uniform grid and
//! closest-point projection onto the design-surface boundary curve.

use nalgebra::Point3;

use super::{bounding_box, SurfaceMesh};
use crate::{Error, Result};

/// Uniform-grid spatial index over a point set.
///
/// Results of [`GridIndex::neighbors_within`] are exact: identical to a
/// brute-force distance scan (inclusive radius), returned sorted by index.
#[derive(Debug)]
pub struct GridIndex {
    origin: Point3<f64>,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
    points: Vec<Point3<f64>>,
}

impl GridIndex {
    pub fn new(points: &[Point3<f64>]) -> Self {
        assert!(!points.is_empty());
        let (lo, hi) = bounding_box(points);
        let diag = (hi - lo).norm().max(1e-300);
        // Aim for a few dozen cells per axis; exactness never depends on this.
        let cell = (diag / 40.0).max(diag * 1e-9);
        let dims = [
            ((hi.x - lo.x) / cell).floor() as usize + 1,
            ((hi.y - lo.y) / cell).floor() as usize + 1,
            ((hi.z - lo.z) / cell).floor() as usize + 1,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, &lo, cell, &dims);
            buckets[flat(c, &dims)].push(i as u32);
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
            points: points.to_vec(),
        }
    }

    /// Indices of all points with Euclidean distance ≤ `radius` from
    /// `center`, sorted ascending.
    pub fn neighbors_within(&self, center: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut lo_cell = [0usize; 3];
        let mut hi_cell = [0usize; 3];
        for c in 0..3 {
            let lo = ((center[c] - radius - self.origin[c]) / self.cell).floor();
            let hi = ((center[c] + radius - self.origin[c]) / self.cell).floor();
            lo_cell[c] = lo.max(0.0) as usize;
            hi_cell[c] = (hi.max(0.0) as usize).min(self.dims[c] - 1);
        }
        let r2 = radius * radius;
        let mut out = Vec::new();
        for ix in lo_cell[0]..=hi_cell[0] {
            for iy in lo_cell[1]..=hi_cell[1] {
                for iz in lo_cell[2]..=hi_cell[2] {
                    for &i in &self.buckets[flat([ix, iy, iz], &self.dims)] {
                        let d2 = (self.points[i as usize] - center).norm_squared();
                        if d2 <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn cell_of(p: &Point3<f64>, origin: &Point3<f64>, cell: f64, dims: &[usize; 3]) -> [usize; 3] {
    let mut c = [0usize; 3];
    for k in 0..3 {
        let idx = ((p[k] - origin[k]) / cell).floor();
        c[k] = (idx.max(0.0) as usize).min(dims[k] - 1);
    }
    c
}

fn flat(c: [usize; 3], dims: &[usize; 3]) -> usize {
    (c[0] * dims[1] + c[1]) * dims[2] + c[2]
}

/// All nodes within `radius` of node `node` (the node itself included).
///
/// Convenience wrapper that builds a transient index; callers issuing many
/// queries should hold a [`GridIndex`] themselves.
pub fn radius_neighbors(nodes: &[Point3<f64>], node: usize, radius: f64) -> Vec<usize> {
    let index = GridIndex::new(nodes);
    index.neighbors_within(&nodes[node], radius)
}

/// Closest point on the segment `[a, b]` to `p`.
pub fn closest_point_on_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest point on the design-surface boundary curve (the piecewise-linear
/// chain of boundary edges) to `p`. Ties are broken by the lowest edge
/// index. Errors with [`Error::EmptyBoundary`] on closed surfaces.
pub fn closest_point_projection(sm: &SurfaceMesh, p: &Point3<f64>) -> Result<Point3<f64>> {
    if sm.boundary_edges().is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let nodes = sm.nodes();
    let mut best = (f64::INFINITY, Point3::origin());
    for edge in sm.boundary_edges() {
        let q = closest_point_on_segment(p, &nodes[edge[0]], &nodes[edge[1]]);
        let d2 = (q - p).norm_squared();
        if d2 < best.0 {
            best = (d2, q);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid_5x5() -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for j in 0..5 {
            for i in 0..5 {
                pts.push(Point3::new(i as f64, j as f64, 0.0));
            }
        }
        pts
    }

    #[test]
    fn tiny_radius_returns_query_node_only() {
        let pts = grid_5x5();
        assert_eq!(radius_neighbors(&pts, 12, 1e-12), vec![12]);
    }

    #[test]
    fn radius_beyond_diameter_returns_all_nodes() {
        let pts = grid_5x5();
        let all = radius_neighbors(&pts, 0, 100.0);
        assert_eq!(all, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn center_query_radius_one_point_five_finds_nine() {
        let pts = grid_5x5();
        // Brute-force oracle.
        let brute: Vec<usize> = (0..25)
            .filter(|&i| (pts[i] - pts[12]).norm() <= 1.5)
            .collect();
        assert_eq!(brute.len(), 9);
        assert_eq!(radius_neighbors(&pts, 12, 1.5), brute);
    }

    #[test]
    fn neighbors_match_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<Point3<f64>> = (0..400)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let index = GridIndex::new(&pts);
        // Every node as the query, two radii each.
        for q in 0..pts.len() {
            for r in [0.35, 1.1] {
                let brute: Vec<usize> = (0..pts.len())
                    .filter(|&i| (pts[i] - pts[q]).norm() <= r)
                    .collect();
                assert_eq!(index.neighbors_within(&pts[q], r), brute);
            }
        }
        // Plus randomized radii on random queries.
        for _ in 0..50 {
            let q = rng.random_range(0..pts.len());
            let r = rng.random_range(0.01..1.5);
            let brute: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - pts[q]).norm() <= r)
                .collect();
            assert_eq!(index.neighbors_within(&pts[q], r), brute);
        }
    }

    #[test]
    fn cpp_vertex_coincidence() {
        let sm = fixtures::unit_square();
        let v = sm.nodes()[0];
        let q = closest_point_projection(&sm, &v).unwrap();
        assert_relative_eq!((q - v).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cpp_center_of_unit_square() {
        let sm = fixtures::unit_square();
        let p = Point3::new(0.5, 0.5, 0.0);
        let q = closest_point_projection(&sm, &p).unwrap();
        // Distance 0.5 to every side; brute force over densely sampled
        // edges confirms no closer point exists.
        assert_relative_eq!((q - p).norm(), 0.5, max_relative = 1e-12);
        let nodes = sm.nodes();
        let mut brute = f64::INFINITY;
        for e in sm.boundary_edges() {
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let s = nodes[e[0]] + (nodes[e[1]] - nodes[e[0]]) * t;
                brute = brute.min((s - p).norm());
            }
        }
        assert_relative_eq!((q - p).norm(), brute, max_relative = 1e-6);
        // Tie across four edges resolves to the lowest edge index.
        let e0 = sm.boundary_edges()[0];
        let on_e0 = closest_point_on_segment(&p, &nodes[e0[0]], &nodes[e0[1]]);
        assert_relative_eq!((q - on_e0).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cpp_foot_of_perpendicular() {
        let sm = fixtures::unit_square();
        // Far outside, perpendicular to the bottom edge y = 0.
        let p = Point3::new(0.3, -7.0, 0.0);
        let q = closest_point_projection(&sm, &p).unwrap();
        assert_relative_eq!(q.x, 0.3, max_relative = 1e-13);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn cpp_closed_surface_errors() {
        let vm = fixtures::ball(1).unwrap();
        let (sphere, _) = crate::mesh::extract_boundary(&vm).unwrap();
        assert!(sphere.boundary_edges().is_empty());
        let err = closest_point_projection(&sphere, &Point3::origin()).unwrap_err();
        assert!(matches!(err, crate::Error::EmptyBoundary));
    }
}
