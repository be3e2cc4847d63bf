//! Deterministic mesh generators for the test suites and the CLI.
//!
//! Identical parameters (including the seed) always produce identical
//! meshes, down to node ordering.

use nalgebra::Point3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::mesh::{compact_nodes, SurfaceMesh, VolumeMesh};
use crate::Result;

/// Right tetrahedron with vertices at the origin and the unit axes
/// (volume 1/6, jacobian 1).
pub fn unit_tet() -> VolumeMesh {
    VolumeMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 1, 2, 3]],
        None,
    )
    .expect("unit tet is valid")
}

/// Two tets sharing the face (0, 1, 2).
pub fn two_tets() -> VolumeMesh {
    VolumeMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.4, 0.4, -2.0),
        ],
        vec![[0, 1, 2, 3], [0, 2, 1, 4]],
        None,
    )
    .expect("two-tet mesh is valid")
}

/// Unit cube split into six tets around the main diagonal.
pub fn kuhn_cube() -> VolumeMesh {
    let nodes: Vec<Point3<f64>> = (0..8)
        .map(|k| Point3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64))
        .collect();
    let tets = kuhn_cell_tets(&|di, dj, dk| di + 2 * dj + 4 * dk, &nodes);
    VolumeMesh::new(nodes, tets, None).expect("kuhn cube is valid")
}

/// Unit square split into two triangles.
pub fn unit_square() -> SurfaceMesh {
    SurfaceMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        None,
    )
    .expect("unit square is valid")
}

/// Flat square plate of `cells` × `cells` grid cells (unit spacing) in the
/// z = 0 plane. Interior nodes are jittered in-plane by up to
/// `jitter` × spacing; boundary nodes stay put so the outline remains
/// square. `jitter = 0` gives the exact structured mesh, whose checkerboard
/// diagonal pattern is reflection-symmetric for even `cells`.
pub fn plate(cells: usize, jitter: f64, seed: u64) -> Result<SurfaceMesh> {
    assert!(cells >= 2, "plate needs at least 2 cells per side");
    let n = cells + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let interior = i > 0 && i < cells && j > 0 && j < cells;
            let (dx, dy) = if interior && jitter > 0.0 {
                (
                    rng.random_range(-jitter..jitter),
                    rng.random_range(-jitter..jitter),
                )
            } else {
                (0.0, 0.0)
            };
            nodes.push(Point3::new(i as f64 + dx, j as f64 + dy, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * n + i;
    let mut triangles = Vec::with_capacity(2 * cells * cells);
    for j in 0..cells {
        for i in 0..cells {
            let (bl, br, tr, tl) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([bl, br, tr]);
                triangles.push([bl, tr, tl]);
            } else {
                triangles.push([br, tr, tl]);
                triangles.push([br, tl, bl]);
            }
        }
    }
    SurfaceMesh::new(nodes, triangles, None)
}

/// Square plate with a circular hole, meshed non-uniformly: rings graded
/// geometrically from fine at the hole towards the square outline. The
/// max/min node-spacing ratio exceeds 3 by construction.
pub fn perforated_plate(resolution: usize) -> Result<SurfaceMesh> {
    assert!(resolution >= 1);
    let n_theta = 8 * resolution.max(2);
    let n_radial = 3 * resolution.max(2);
    let hole_radius = 1.0;
    let half_side = 5.0;
    let grading: f64 = 1.6;

    let mut nodes = Vec::with_capacity((n_radial + 1) * n_theta);
    let denom = grading.powi(n_radial as i32) - 1.0;
    for k in 0..=n_radial {
        let t = (grading.powi(k as i32) - 1.0) / denom;
        for j in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
            let (s, c) = theta.sin_cos();
            let outer = half_side / c.abs().max(s.abs());
            let r = hole_radius + t * (outer - hole_radius);
            nodes.push(Point3::new(r * c, r * s, 0.0));
        }
    }
    let idx = |k: usize, j: usize| k * n_theta + j % n_theta;
    let mut triangles = Vec::with_capacity(2 * n_radial * n_theta);
    for k in 0..n_radial {
        for j in 0..n_theta {
            let (a, b, c, d) = (idx(k, j), idx(k, j + 1), idx(k + 1, j + 1), idx(k + 1, j));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    SurfaceMesh::new(nodes, triangles, None)
}

/// Tetrahedral block [0,2] × [0,2] × [0,1] with a rectangular pocket cut
/// into the centre of the top face. The z spacing is graded so element
/// jacobians vary from the start.
///
/// Design flags mark the optimizable surface: boundary nodes strictly
/// inside the plan outline with z > 0 (top face and pocket walls). Side
/// and bottom boundary nodes are non-design; interior nodes keep the
/// default design flag, which never makes them part of a design surface
/// triangle.
pub fn notched_block(resolution: usize) -> Result<VolumeMesh> {
    assert!(resolution >= 3, "notched block needs resolution >= 3");
    let nx = 2 * resolution;
    let ny = 2 * resolution;
    let nz = resolution;
    let (lx, ly, lz) = (2.0, 2.0, 1.0);

    // Graded z levels, finer near the bottom.
    let zg: f64 = 1.3;
    let zdenom = zg.powi(nz as i32) - 1.0;
    let z_of = |k: usize| lz * (zg.powi(k as i32) - 1.0) / zdenom;

    let node_id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point3::new(
                    lx * i as f64 / nx as f64,
                    ly * j as f64 / ny as f64,
                    z_of(k),
                ));
            }
        }
    }

    let notch = |i: usize, j: usize, k: usize| {
        i >= nx / 3 && i < nx - nx / 3 && j >= ny / 3 && j < ny - ny / 3 && k >= 2 * nz / 3
    };
    let mut tets = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if notch(i, j, k) {
                    continue;
                }
                let corner = |di: usize, dj: usize, dk: usize| node_id(i + di, j + dj, k + dk);
                tets.extend(kuhn_cell_tets(&corner, &nodes));
            }
        }
    }
    let (cnodes, ctets, _) = compact_nodes(&nodes, &tets);
    let mut vm = VolumeMesh::new(cnodes, ctets, None)?;

    let eps = 1e-9;
    let mut design = vec![true; vm.n_nodes()];
    let mut on_boundary = vec![false; vm.n_nodes()];
    for f in vm.boundary_faces() {
        for &i in f {
            on_boundary[i] = true;
        }
    }
    for (i, p) in vm.nodes().iter().enumerate() {
        if on_boundary[i] {
            let inside_plan = p.x > eps && p.x < lx - eps && p.y > eps && p.y < ly - eps;
            design[i] = inside_plan && p.z > eps;
        }
    }
    vm.set_design_flags(design)?;
    Ok(vm)
}

/// Unit ball: an icosahedron subdivided `resolution - 1` times and
/// projected onto the unit sphere, with every surface triangle fanned to a
/// centre node. `resolution = 1` keeps the plain icosahedron, whose 12
/// boundary nodes are all equivalent under its symmetry group.
pub fn ball(resolution: usize) -> Result<VolumeMesh> {
    assert!(resolution >= 1);
    let (mut verts, faces) = icosphere(resolution - 1);
    let center = verts.len();
    verts.push(Point3::origin());
    let mut tets = Vec::with_capacity(faces.len());
    for f in &faces {
        let mut tet = [center, f[0], f[1], f[2]];
        if crate::mesh::tet_volume(&verts, &tet) < 0.0 {
            tet.swap(2, 3);
        }
        tets.push(tet);
    }
    VolumeMesh::new(verts, tets, None)
}

/// Icosahedron subdivided `levels` times, vertices on the unit sphere.
pub fn icosphere(levels: usize) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let mut verts: Vec<Point3<f64>> = raw
        .iter()
        .map(|&(x, y, z)| {
            let n = (x * x + y * y + z * z).sqrt();
            Point3::new(x / n, y / n, z / n)
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut midpoint = std::collections::HashMap::new();
        let mut next_faces = Vec::with_capacity(4 * faces.len());
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let p = nalgebra::center(&verts[a], &verts[b]);
                    let unit = p.coords / p.coords.norm();
                    verts.push(Point3::from(unit));
                    verts.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    (verts, faces)
}

/// Six-tet Kuhn split of one grid cell; conforming across cells because
/// every cell uses the same main diagonal.
fn kuhn_cell_tets(
    corner: &dyn Fn(usize, usize, usize) -> usize,
    nodes: &[Point3<f64>],
) -> Vec<[usize; 4]> {
    const AXIS_ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6);
    for order in AXIS_ORDERS {
        let mut delta = [0usize; 3];
        let v0 = corner(0, 0, 0);
        delta[order[0]] = 1;
        let v1 = corner(delta[0], delta[1], delta[2]);
        delta[order[1]] = 1;
        let v2 = corner(delta[0], delta[1], delta[2]);
        let v3 = corner(1, 1, 1);
        let mut tet = [v0, v1, v2, v3];
        if crate::mesh::tet_volume(nodes, &tet) < 0.0 {
            tet.swap(1, 2);
        }
        tets.push(tet);
    }
    tets
}
