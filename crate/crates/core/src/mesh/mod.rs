//! Mesh representation, validation, boundary extraction and geometric
//! queries.
//!
//! Meshes are immutable after construction except for
//! [`SurfaceMesh::set_node_positions`] / [`VolumeMesh::set_node_positions`],
//! which the optimization loop uses to move nodes; element quality is the
//! caller's responsibility from then on (see `element_jacobian`).

pub mod io;
pub mod queries;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::field::NodalField;
use crate::{Error, Result};

/// Relative measure threshold: elements smaller than this fraction of the
/// mean element measure are rejected as degenerate at construction time.
pub const DEGENERACY_REL_THRESHOLD: f64 = 1e-12;

/// Triangle surface mesh with boundary edges and per-node design flags.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    nodes: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    /// Edges incident to exactly one triangle.
    boundary_edges: Vec<[usize; 2]>,
    design: Vec<bool>,
}

impl SurfaceMesh {
    pub fn new(
        nodes: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
        design: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if !nodes.iter().all(|p| p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("node coordinates"));
        }
        for (e, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateElement {
                    index: e,
                    measure: 0.0,
                    threshold: 0.0,
                });
            }
        }
        let areas: Vec<f64> = triangles.iter().map(|t| triangle_area(&nodes, t)).collect();
        let mean = areas.iter().sum::<f64>() / areas.len().max(1) as f64;
        let threshold = DEGENERACY_REL_THRESHOLD * mean;
        for (e, &a) in areas.iter().enumerate() {
            if a <= threshold {
                return Err(Error::DegenerateElement {
                    index: e,
                    measure: a,
                    threshold,
                });
            }
        }
        let boundary_edges = boundary_edges_of(&triangles);
        let design = design.unwrap_or_else(|| vec![true; n]);
        if design.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: design.len(),
            });
        }
        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
            design,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn design_flags(&self) -> &[bool] {
        &self.design
    }

    pub fn set_design_flags(&mut self, design: Vec<bool>) -> Result<()> {
        if design.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                got: design.len(),
            });
        }
        self.design = design;
        Ok(())
    }

    /// Node coordinates as a flat field (node-major, xyz-minor).
    pub fn positions(&self) -> NodalField {
        let mut f = NodalField::zeros(self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            f.set_node(i, p.coords);
        }
        f
    }

    /// Moves the nodes. Connectivity and boundary structure are untouched;
    /// no degeneracy re-check happens here.
    pub fn set_node_positions(&mut self, positions: &NodalField) {
        assert_eq!(positions.n_nodes(), self.nodes.len());
        for (i, p) in self.nodes.iter_mut().enumerate() {
            p.coords = positions.node(i);
        }
    }

    pub fn triangle_area(&self, e: usize) -> f64 {
        triangle_area(&self.nodes, &self.triangles[e])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|e| self.triangle_area(e))
            .sum()
    }

    /// Mean length over the unique edges of the mesh.
    pub fn mean_edge_length(&self) -> f64 {
        let mut seen = std::collections::HashSet::new();
        let mut total = 0.0;
        let mut count = 0usize;
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                if seen.insert(key) {
                    total += (self.nodes[a] - self.nodes[b]).norm();
                    count += 1;
                }
            }
        }
        total / count.max(1) as f64
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        bounding_box(&self.nodes)
    }

    /// Submesh of the triangles whose three nodes are all design nodes,
    /// with the map from submesh node indices to parent indices.
    pub fn design_submesh(&self) -> Result<(SurfaceMesh, Vec<usize>)> {
        let tris: Vec<[usize; 3]> = self
            .triangles
            .iter()
            .filter(|t| t.iter().all(|&i| self.design[i]))
            .copied()
            .collect();
        if tris.is_empty() {
            return Err(Error::InvalidConfig(
                "design submesh is empty: no triangle has all nodes design-flagged".into(),
            ));
        }
        let (nodes, mapped, map) = compact_nodes(&self.nodes, &tris);
        let design = map.iter().map(|&i| self.design[i]).collect();
        let sub = SurfaceMesh::new(nodes, mapped, Some(design))?;
        Ok((sub, map))
    }
}

/// Tetrahedral volume mesh. The boundary (faces incident to exactly one
/// tet, oriented outward) is computed at construction.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    nodes: Vec<Point3<f64>>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<[usize; 3]>,
    design: Vec<bool>,
}

impl VolumeMesh {
    pub fn new(
        nodes: Vec<Point3<f64>>,
        tets: Vec<[usize; 4]>,
        design: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if !nodes.iter().all(|p| p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("node coordinates"));
        }
        for (e, tet) in tets.iter().enumerate() {
            for &i in tet {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
            }
            for a in 0..4 {
                for b in (a + 1)..4 {
                    if tet[a] == tet[b] {
                        return Err(Error::DegenerateElement {
                            index: e,
                            measure: 0.0,
                            threshold: 0.0,
                        });
                    }
                }
            }
        }
        let volumes: Vec<f64> = tets.iter().map(|t| tet_volume(&nodes, t)).collect();
        let mean = volumes.iter().map(|v| v.abs()).sum::<f64>() / volumes.len().max(1) as f64;
        let threshold = DEGENERACY_REL_THRESHOLD * mean;
        for (e, &v) in volumes.iter().enumerate() {
            if v.abs() <= threshold {
                return Err(Error::DegenerateElement {
                    index: e,
                    measure: v,
                    threshold,
                });
            }
            if v < 0.0 {
                return Err(Error::InvertedElement {
                    index: e,
                    jacobian: 6.0 * v,
                });
            }
        }
        let boundary_faces = boundary_faces_of(&tets)?;
        let design = design.unwrap_or_else(|| vec![true; n]);
        if design.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: design.len(),
            });
        }
        Ok(Self {
            nodes,
            tets,
            boundary_faces,
            design,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    /// Outward-oriented boundary triangles in volume-node indexing.
    pub fn boundary_faces(&self) -> &[[usize; 3]] {
        &self.boundary_faces
    }

    pub fn design_flags(&self) -> &[bool] {
        &self.design
    }

    pub fn set_design_flags(&mut self, design: Vec<bool>) -> Result<()> {
        if design.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                got: design.len(),
            });
        }
        self.design = design;
        Ok(())
    }

    pub fn positions(&self) -> NodalField {
        let mut f = NodalField::zeros(self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            f.set_node(i, p.coords);
        }
        f
    }

    pub fn set_node_positions(&mut self, positions: &NodalField) {
        assert_eq!(positions.n_nodes(), self.nodes.len());
        for (i, p) in self.nodes.iter_mut().enumerate() {
            p.coords = positions.node(i);
        }
    }

    pub fn tet_volume(&self, e: usize) -> f64 {
        tet_volume(&self.nodes, &self.tets[e])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|e| self.tet_volume(e)).sum()
    }

    pub fn min_jacobian(&self) -> f64 {
        (0..self.tets.len())
            .map(|e| element_jacobian(self, e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        bounding_box(&self.nodes)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut seen = std::collections::HashSet::new();
        let mut total = 0.0;
        let mut count = 0usize;
        for t in &self.tets {
            for (a, b) in [
                (t[0], t[1]),
                (t[0], t[2]),
                (t[0], t[3]),
                (t[1], t[2]),
                (t[1], t[3]),
                (t[2], t[3]),
            ] {
                let key = (a.min(b), a.max(b));
                if seen.insert(key) {
                    total += (self.nodes[a] - self.nodes[b]).norm();
                    count += 1;
                }
            }
        }
        total / count.max(1) as f64
    }
}

/// Signed reference-to-physical Jacobian determinant of a straight P1 tet
/// (6 × signed volume). Negative values signal inversion, they are
/// returned, never raised.
pub fn element_jacobian(vm: &VolumeMesh, e: usize) -> f64 {
    let t = &vm.tets[e];
    let p0 = vm.nodes[t[0]];
    let d1 = vm.nodes[t[1]] - p0;
    let d2 = vm.nodes[t[2]] - p0;
    let d3 = vm.nodes[t[3]] - p0;
    d1.dot(&d2.cross(&d3))
}

/// Boundary surface (faces incident to exactly one tet) as a compact
/// [`SurfaceMesh`] plus the map from boundary-local node indices to volume
/// node indices. Design flags are inherited from the volume mesh.
pub fn extract_boundary(vm: &VolumeMesh) -> Result<(SurfaceMesh, Vec<usize>)> {
    let (nodes, tris, map) = compact_nodes(&vm.nodes, &vm.boundary_faces);
    let design = map.iter().map(|&i| vm.design[i]).collect();
    let sm = SurfaceMesh::new(nodes, tris, Some(design))?;
    Ok((sm, map))
}

pub fn triangle_area(nodes: &[Point3<f64>], tri: &[usize; 3]) -> f64 {
    let a = nodes[tri[1]] - nodes[tri[0]];
    let b = nodes[tri[2]] - nodes[tri[0]];
    0.5 * a.cross(&b).norm()
}

/// Area-weighted outward normal (cross product over two) of an oriented
/// triangle.
pub fn triangle_area_vector(nodes: &[Point3<f64>], tri: &[usize; 3]) -> Vector3<f64> {
    let a = nodes[tri[1]] - nodes[tri[0]];
    let b = nodes[tri[2]] - nodes[tri[0]];
    0.5 * a.cross(&b)
}

pub fn tet_volume(nodes: &[Point3<f64>], tet: &[usize; 4]) -> f64 {
    let p0 = nodes[tet[0]];
    let d1 = nodes[tet[1]] - p0;
    let d2 = nodes[tet[2]] - p0;
    let d3 = nodes[tet[3]] - p0;
    d1.dot(&d2.cross(&d3)) / 6.0
}

pub fn bounding_box(nodes: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in nodes {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    (lo, hi)
}

fn boundary_edges_of(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut counts: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            let entry = counts.entry(key).or_insert((0, [a, b]));
            entry.0 += 1;
        }
    }
    let mut edges: Vec<[usize; 2]> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c == 1)
        .map(|(_, (_, e))| e)
        .collect();
    edges.sort_unstable();
    edges
}

/// Outward faces of tet (a, b, c, d) when det[b-a, c-a, d-a] > 0.
fn tet_faces(t: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [t[0], t[2], t[1]],
        [t[0], t[1], t[3]],
        [t[0], t[3], t[2]],
        [t[1], t[2], t[3]],
    ]
}

fn boundary_faces_of(tets: &[[usize; 4]]) -> Result<Vec<[usize; 3]>> {
    let mut counts: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for t in tets {
        for face in tet_faces(t) {
            let mut key = face;
            key.sort_unstable();
            let entry = counts.entry(key).or_insert((0, face));
            entry.0 += 1;
        }
    }
    for (key, (c, _)) in &counts {
        if *c > 2 {
            return Err(Error::NonManifoldFace(key[0], key[1], key[2]));
        }
    }
    let mut faces: Vec<[usize; 3]> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c == 1)
        .map(|(_, (_, f))| f)
        .collect();
    faces.sort_unstable();
    Ok(faces)
}

/// Renumbers the nodes referenced by `elements` compactly. Returns the new
/// node array, the renumbered elements, and the new-to-old index map.
pub(crate) fn compact_nodes<const K: usize>(
    nodes: &[Point3<f64>],
    elements: &[[usize; K]],
) -> (Vec<Point3<f64>>, Vec<[usize; K]>, Vec<usize>) {
    let mut new_index = vec![usize::MAX; nodes.len()];
    let mut map = Vec::new();
    for el in elements {
        for &i in el {
            if new_index[i] == usize::MAX {
                new_index[i] = map.len();
                map.push(i);
            }
        }
    }
    let new_nodes = map.iter().map(|&i| nodes[i]).collect();
    let new_elements = elements
        .iter()
        .map(|el| {
            let mut out = [0usize; K];
            for (k, &i) in el.iter().enumerate() {
                out[k] = new_index[i];
            }
            out
        })
        .collect();
    (new_nodes, new_elements, map)
}
