//! P1 isoparametric finite-element assembly: surface/bulk mass matrices,
//! surface Laplace-Beltrami stiffness, bulk linear-elastic stiffness with
//! optional mesh-Jacobian-based stiffening, and the reference Jacobian
//! scale that balances bulk and surface energies.
//!
//! All element integrals are exact closed forms; numerical quadrature lives
//! only in the test oracles.

use nalgebra::{Matrix3, Point3, SMatrix, Vector3};
use rayon::prelude::*;

use crate::mesh::{SurfaceMesh, VolumeMesh};
use crate::sparse::{CsrMatrix, TripletBuffer};
use crate::{Error, Result};

/// Isotropic linear-elastic Lamé parameters for the pseudo-solid.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ElasticityParams {
    pub lambda: f64,
    pub mu: f64,
}

impl ElasticityParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid Lamé parameters lambda = {lambda}, mu = {mu}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn from_youngs_poisson(youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0) || !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "invalid elastic moduli E = {youngs}, nu = {poisson}"
            )));
        }
        let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = youngs / (2.0 * (1.0 + poisson));
        Self::new(lambda, mu)
    }
}

impl Default for ElasticityParams {
    /// E = 1, ν = 0.3. The pseudo-solid is scale-invariant in E up to the
    /// rebalancing performed by [`reference_jacobian`].
    fn default() -> Self {
        Self::from_youngs_poisson(1.0, 0.3).expect("defaults are valid")
    }
}

/// Filter length parameters of the implicit family.
#[derive(Debug, Clone, Copy)]
pub struct FilterRadii {
    /// Surface Helmholtz radius.
    pub r_gamma: f64,
    /// Bulk/surface energy weighting in (0, 1].
    pub beta: f64,
    /// Reference Jacobian scale (computed, not user input).
    pub j0: f64,
}

impl FilterRadii {
    pub fn new(r_gamma: f64, beta: f64, j0: f64) -> Result<Self> {
        if !(r_gamma >= 0.0) || !(beta > 0.0 && beta <= 1.0) || !(j0 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid filter radii r_gamma = {r_gamma}, beta = {beta}, j0 = {j0}"
            )));
        }
        Ok(Self { r_gamma, beta, j0 })
    }
}

/// How the bulk pseudo-stiffness scales each element.
#[derive(Debug, Clone, Copy)]
pub enum Stiffening {
    /// Uniform radius: every element matrix is scaled by `radius²`.
    Constant(f64),
    /// Mesh-Jacobian-based stiffening: element `e` is scaled by
    /// `(j0 / J^e)²`, so smaller elements resist deformation more.
    MeshJacobian { j0: f64 },
}

/// Consistent P1 mass matrix of a triangle surface mesh (scalar, n × n).
/// Vector-valued mass application is the blockwise copy per component.
pub fn surface_mass_matrix(sm: &SurfaceMesh) -> Result<CsrMatrix> {
    let nodes = sm.nodes();
    let contributions: Vec<(usize, [usize; 3], f64)> = sm
        .triangles()
        .par_iter()
        .enumerate()
        .map(|(e, tri)| (e, *tri, crate::mesh::triangle_area(nodes, tri)))
        .collect();
    let mut triplets = TripletBuffer::with_capacity(9 * contributions.len());
    for (e, tri, area) in contributions {
        if !(area > 0.0) {
            return Err(Error::DegenerateElement {
                index: e,
                measure: area,
                threshold: 0.0,
            });
        }
        // Exact P1 triangle mass: area/12 * (1 + delta_ij).
        for a in 0..3 {
            for b in 0..3 {
                let v = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                triplets.push(tri[a], tri[b], v);
            }
        }
    }
    CsrMatrix::assemble(&triplets, sm.n_nodes(), true)
}

/// Laplace-Beltrami stiffness of a triangle surface mesh, scaled by
/// `r_gamma²` (scalar, n × n). Constants are in the null space exactly.
pub fn surface_lb_stiffness(sm: &SurfaceMesh, r_gamma: f64) -> Result<CsrMatrix> {
    let nodes = sm.nodes();
    let r2 = r_gamma * r_gamma;
    let elements: Vec<(usize, [usize; 3], [[f64; 3]; 3])> = sm
        .triangles()
        .par_iter()
        .enumerate()
        .map(|(e, tri)| {
            let (grads, area) = triangle_shape_gradients(nodes, tri);
            let mut local = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] = r2 * area * grads[a].dot(&grads[b]);
                }
            }
            (e, *tri, local)
        })
        .collect();
    let mut triplets = TripletBuffer::with_capacity(9 * elements.len());
    for (_, tri, local) in elements {
        for a in 0..3 {
            for b in 0..3 {
                triplets.push(tri[a], tri[b], local[a][b]);
            }
        }
    }
    CsrMatrix::assemble(&triplets, sm.n_nodes(), true)
}

/// In-plane gradients of the three P1 shape functions of a (possibly
/// space-embedded) triangle, plus its area.
pub fn triangle_shape_gradients(
    nodes: &[Point3<f64>],
    tri: &[usize; 3],
) -> ([Vector3<f64>; 3], f64) {
    let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let area = 0.5 * cross.norm();
    let n = cross / cross.norm();
    // grad N_a = n x (opposite edge) / (2 A), pointing from the opposite
    // edge towards vertex a.
    let grads = [
        n.cross(&(p[2] - p[1])) / (2.0 * area),
        n.cross(&(p[0] - p[2])) / (2.0 * area),
        n.cross(&(p[1] - p[0])) / (2.0 * area),
    ];
    (grads, area)
}

/// Consistent P1 mass matrix of a tet mesh (scalar, n × n).
pub fn bulk_mass_matrix(vm: &VolumeMesh) -> Result<CsrMatrix> {
    let nodes = vm.nodes();
    let contributions: Vec<(usize, [usize; 4], f64)> = vm
        .tets()
        .par_iter()
        .enumerate()
        .map(|(e, tet)| (e, *tet, crate::mesh::tet_volume(nodes, tet)))
        .collect();
    let mut triplets = TripletBuffer::with_capacity(16 * contributions.len());
    for (e, tet, volume) in contributions {
        if !(volume > 0.0) {
            return Err(Error::DegenerateElement {
                index: e,
                measure: volume,
                threshold: 0.0,
            });
        }
        // Exact P1 tet mass: V/20 * (1 + delta_ij).
        for a in 0..4 {
            for b in 0..4 {
                let v = volume / 20.0 * if a == b { 2.0 } else { 1.0 };
                triplets.push(tet[a], tet[b], v);
            }
        }
    }
    CsrMatrix::assemble(&triplets, vm.n_nodes(), true)
}

/// Gradients of the four P1 shape functions of a tet, plus its volume.
pub fn tet_shape_gradients(nodes: &[Point3<f64>], tet: &[usize; 4]) -> ([Vector3<f64>; 4], f64) {
    let p0 = nodes[tet[0]];
    let d = Matrix3::from_columns(&[nodes[tet[1]] - p0, nodes[tet[2]] - p0, nodes[tet[3]] - p0]);
    let jac = d.determinant();
    let d_inv_t = d
        .try_inverse()
        .expect("degenerate tets are rejected at construction")
        .transpose();
    let g1 = d_inv_t.column(0).into_owned();
    let g2 = d_inv_t.column(1).into_owned();
    let g3 = d_inv_t.column(2).into_owned();
    let g0 = -(g1 + g2 + g3);
    ([g0, g1, g2, g3], jac / 6.0)
}

/// 12 × 12 element stiffness `V · BᵀCB` of a P1 tet for isotropic linear
/// elasticity (dof order: node-major, xyz-minor).
pub fn tet_elastic_element(
    nodes: &[Point3<f64>],
    tet: &[usize; 4],
    ep: &ElasticityParams,
) -> SMatrix<f64, 12, 12> {
    let (grads, volume) = tet_shape_gradients(nodes, tet);
    tet_elastic_element_from_gradients(&grads, volume, ep)
}

fn tet_elastic_element_from_gradients(
    grads: &[Vector3<f64>; 4],
    volume: f64,
    ep: &ElasticityParams,
) -> SMatrix<f64, 12, 12> {
    // Voigt order: xx, yy, zz, xy, yz, zx with engineering shear strains.
    let mut b = SMatrix::<f64, 6, 12>::zeros();
    for a in 0..4 {
        let g = grads[a];
        let col = 3 * a;
        b[(0, col)] = g.x;
        b[(1, col + 1)] = g.y;
        b[(2, col + 2)] = g.z;
        b[(3, col)] = g.y;
        b[(3, col + 1)] = g.x;
        b[(4, col + 1)] = g.z;
        b[(4, col + 2)] = g.y;
        b[(5, col)] = g.z;
        b[(5, col + 2)] = g.x;
    }
    let mut c = SMatrix::<f64, 6, 6>::zeros();
    let (la, mu) = (ep.lambda, ep.mu);
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = la;
        }
        c[(i, i)] = la + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    b.transpose() * c * b * volume
}

/// Bulk linear-elastic pseudo-stiffness (3n × 3n, node-major xyz-minor
/// dofs). Annihilates the six infinitesimal rigid-body modes exactly.
pub fn bulk_elastic_stiffness(
    vm: &VolumeMesh,
    ep: &ElasticityParams,
    stiffening: Stiffening,
) -> Result<CsrMatrix> {
    let nodes = vm.nodes();
    let locals: Vec<(
        usize,
        [usize; 4],
        std::result::Result<SMatrix<f64, 12, 12>, Error>,
    )> = vm
        .tets()
        .par_iter()
        .enumerate()
        .map(|(e, tet)| {
            let (grads, volume) = tet_shape_gradients(nodes, tet);
            let scale = match stiffening {
                Stiffening::Constant(r) => r * r,
                Stiffening::MeshJacobian { j0 } => {
                    let jac = 6.0 * volume;
                    if jac <= 0.0 {
                        return (
                            e,
                            *tet,
                            Err(Error::InvertedElement {
                                index: e,
                                jacobian: jac,
                            }),
                        );
                    }
                    (j0 / jac) * (j0 / jac)
                }
            };
            let local = tet_elastic_element_from_gradients(&grads, volume, ep) * scale;
            (e, *tet, Ok(local))
        })
        .collect();
    let mut triplets = TripletBuffer::with_capacity(144 * locals.len());
    for (_, tet, local) in locals {
        let local = local?;
        for a in 0..4 {
            for b in 0..4 {
                for ca in 0..3 {
                    for cb in 0..3 {
                        triplets.push(
                            3 * tet[a] + ca,
                            3 * tet[b] + cb,
                            local[(3 * a + ca, 3 * b + cb)],
                        );
                    }
                }
            }
        }
    }
    CsrMatrix::assemble(&triplets, 3 * vm.n_nodes(), true)
}

/// Reference Jacobian scale for mesh-Jacobian-based stiffening, balancing
/// the boundary-smoothness energy against the Jacobian-weighted bulk strain
/// energy of the current geometry:
///
/// `j0 = beta * (r_gamma² x_Γᵀ K̂_Γ x_Γ) / (xᵀ K̂_Ω x)`
///
/// where `K̂_Γ` is the unit-radius Laplace-Beltrami stiffness of the design
/// surface and `K̂_Ω` the Jacobian-weighted elastic stiffness. Both
/// quadratic forms are evaluated elementwise on the current node positions.
pub fn reference_jacobian(
    vm: &VolumeMesh,
    ep: &ElasticityParams,
    r_gamma: f64,
    beta: f64,
) -> Result<f64> {
    let (surface, map) = design_surface(vm)?;
    let nodes = surface.nodes();
    let mut numerator = 0.0;
    for tri in surface.triangles() {
        let (grads, area) = triangle_shape_gradients(nodes, tri);
        for a in 0..3 {
            for b in 0..3 {
                let w = area * grads[a].dot(&grads[b]);
                numerator += w * nodes[tri[a]].coords.dot(&nodes[tri[b]].coords);
            }
        }
    }
    let _ = map;
    numerator *= r_gamma * r_gamma;

    let vnodes = vm.nodes();
    let mut denominator = 0.0;
    for (e, tet) in vm.tets().iter().enumerate() {
        let (grads, volume) = tet_shape_gradients(vnodes, tet);
        let jac = 6.0 * volume;
        if jac <= 0.0 {
            return Err(Error::InvertedElement {
                index: e,
                jacobian: jac,
            });
        }
        let local = tet_elastic_element_from_gradients(&grads, volume, ep) / jac;
        let mut x = SMatrix::<f64, 12, 1>::zeros();
        for a in 0..4 {
            let p = vnodes[tet[a]];
            x[3 * a] = p.x;
            x[3 * a + 1] = p.y;
            x[3 * a + 2] = p.z;
        }
        denominator += (x.transpose() * local * x)[(0, 0)];
    }
    if !(denominator > 0.0) {
        return Err(Error::Singular(format!(
            "jacobian-weighted strain energy of the current geometry is {denominator:e}; \
             use the fallback reference jacobian"
        )));
    }
    if !(numerator >= 0.0) {
        return Err(Error::Singular(format!(
            "boundary smoothness energy of the current geometry is {numerator:e}"
        )));
    }
    Ok(beta * numerator / denominator)
}

/// Fallback reference Jacobian for degenerate geometries (e.g. a vanishing
/// quadratic form on iteration 0): `beta * r_gamma² * area / volume`.
pub fn fallback_reference_jacobian(vm: &VolumeMesh, r_gamma: f64, beta: f64) -> Result<f64> {
    let (surface, _) = design_surface(vm)?;
    let area = surface.total_area();
    let volume = vm.total_volume();
    if !(volume > 0.0) {
        return Err(Error::Singular("mesh volume is not positive".into()));
    }
    Ok(beta * r_gamma * r_gamma * area / volume)
}

/// The design surface of a volume mesh: the boundary triangles whose three
/// nodes all carry the design flag, as a compact surface mesh plus the map
/// to volume node indices. Falls back to the full boundary when every
/// boundary node is a design node.
pub fn design_surface(vm: &VolumeMesh) -> Result<(SurfaceMesh, Vec<usize>)> {
    let (boundary, map) = crate::mesh::extract_boundary(vm)?;
    if boundary.design_flags().iter().all(|&d| d) {
        return Ok((boundary, map));
    }
    let (sub, submap) = boundary.design_submesh()?;
    let map = submap.iter().map(|&i| map[i]).collect();
    Ok((sub, map))
}
