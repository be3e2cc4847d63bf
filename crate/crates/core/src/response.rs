//! Response functions with discrete (consistent) shape sensitivities:
//! total volume, linear-elastic strain energy of a small tet model, and
//! the synthetic uniform sensitivity field used by the consistency checks.

use nalgebra::Vector3;

use crate::fem::{bulk_elastic_stiffness, tet_elastic_element, ElasticityParams, Stiffening};
use crate::field::NodalField;
use crate::mesh::{SurfaceMesh, VolumeMesh};
use crate::sparse::{cg_solve_strict, CsrMatrix};
use crate::{Error, Result};

/// A response evaluation: scalar value plus the discrete shape
/// sensitivities dJ/dx on every node.
#[derive(Debug, Clone)]
pub struct ResponseValue {
    pub value: f64,
    pub gradient: NodalField,
}

/// Total volume (mass with unit density) and its exact analytic gradient
/// with respect to the node coordinates. Interior node contributions
/// cancel exactly; only boundary nodes carry a net gradient.
pub fn volume_response(vm: &VolumeMesh) -> Result<ResponseValue> {
    let nodes = vm.nodes();
    let mut value = 0.0;
    let mut gradient = NodalField::zeros(vm.n_nodes());
    for (e, tet) in vm.tets().iter().enumerate() {
        let v = crate::mesh::tet_volume(nodes, tet);
        if v <= 0.0 {
            return Err(Error::InvertedElement {
                index: e,
                jacobian: 6.0 * v,
            });
        }
        value += v;
        let p0 = nodes[tet[0]];
        let d1 = nodes[tet[1]] - p0;
        let d2 = nodes[tet[2]] - p0;
        let d3 = nodes[tet[3]] - p0;
        let g1 = d2.cross(&d3) / 6.0;
        let g2 = d3.cross(&d1) / 6.0;
        let g3 = d1.cross(&d2) / 6.0;
        gradient.add_node(tet[1], g1);
        gradient.add_node(tet[2], g2);
        gradient.add_node(tet[3], g3);
        gradient.add_node(tet[0], -(g1 + g2 + g3));
    }
    Ok(ResponseValue { value, gradient })
}

/// A nodal point load.
#[derive(Debug, Clone, Copy)]
pub struct PointLoad {
    pub node: usize,
    pub force: Vector3<f64>,
}

/// Linear-elastic strain energy `½ uᵀ K u` of the tet model under nodal
/// point loads, with the listed nodes clamped (all three dofs).
///
/// The structural stiffness carries no filter radii or stiffening. Shape
/// sensitivities are semi-analytic: the self-adjoint identity
/// `dJ/dx = -½ uᵀ (∂K/∂x) u` evaluated element by element with central
/// differences of the closed-form element matrix (step `1e-6` × the local
/// mean edge length). Nodal loads do not depend on node positions, so no
/// load-position term arises.
pub fn strain_energy_response(
    vm: &VolumeMesh,
    ep: &ElasticityParams,
    dirichlet_nodes: &[bool],
    loads: &[PointLoad],
) -> Result<ResponseValue> {
    let n = vm.n_nodes();
    if dirichlet_nodes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dirichlet_nodes.len(),
        });
    }
    if !dirichlet_nodes.iter().any(|&d| d) {
        return Err(Error::Singular(
            "strain-energy model needs Dirichlet constraints to remove rigid modes".into(),
        ));
    }
    for load in loads {
        if load.node >= n {
            return Err(Error::IndexOutOfRange {
                index: load.node,
                len: n,
            });
        }
        if dirichlet_nodes[load.node] {
            return Err(Error::InvalidConfig(format!(
                "point load on clamped node {}",
                load.node
            )));
        }
    }

    let stiffness = bulk_elastic_stiffness(vm, ep, Stiffening::Constant(1.0))?;
    let keep: Vec<bool> = (0..3 * n).map(|dof| !dirichlet_nodes[dof / 3]).collect();
    let (k_red, map) = stiffness.restrict(&keep);

    let mut f_full = vec![0.0; 3 * n];
    for load in loads {
        f_full[3 * load.node] += load.force.x;
        f_full[3 * load.node + 1] += load.force.y;
        f_full[3 * load.node + 2] += load.force.z;
    }
    let f_red: Vec<f64> = map.iter().map(|&dof| f_full[dof]).collect();

    let u_red =
        cg_solve_strict(&k_red, &f_red, 1e-12, 20 * k_red.dim().max(100)).map_err(|e| match e {
            Error::Breakdown(msg) => Error::Singular(format!("structural system: {msg}")),
            other => other,
        })?;
    let value = 0.5 * dot(&f_red, &u_red);

    let mut u_full = vec![0.0; 3 * n];
    for (red_idx, &dof) in map.iter().enumerate() {
        u_full[dof] = u_red[red_idx];
    }

    let nodes = vm.nodes();
    let mut gradient = NodalField::zeros(n);
    let mut coords = [nalgebra::Point3::origin(); 4];
    let local_tet = [0usize, 1, 2, 3];
    for tet in vm.tets() {
        for (a, &ni) in tet.iter().enumerate() {
            coords[a] = nodes[ni];
        }
        let mut u_e = nalgebra::SVector::<f64, 12>::zeros();
        for (a, &ni) in tet.iter().enumerate() {
            for c in 0..3 {
                u_e[3 * a + c] = u_full[3 * ni + c];
            }
        }
        let mut mean_edge = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                mean_edge += (coords[a] - coords[b]).norm();
            }
        }
        mean_edge /= 6.0;
        let h = 1e-6 * mean_edge;
        for a in 0..4 {
            for c in 0..3 {
                let mut plus = coords;
                plus[a][c] += h;
                let mut minus = coords;
                minus[a][c] -= h;
                let k_plus = tet_elastic_element(&plus, &local_tet, ep);
                let k_minus = tet_elastic_element(&minus, &local_tet, ep);
                let dk = (k_plus - k_minus) / (2.0 * h);
                let sens = -0.5 * (u_e.transpose() * dk * u_e)[(0, 0)];
                gradient.as_mut_slice()[3 * tet[a] + c] += sens;
            }
        }
    }
    Ok(ResponseValue { value, gradient })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete consistent sensitivity field of a uniform continuous
/// sensitivity: `dJ/dx = M_Γ · (direction per node)`. On non-uniform
/// meshes the nodal values are proportional to tributary areas.
pub fn synthetic_uniform_sensitivity(
    sm: &SurfaceMesh,
    direction: Vector3<f64>,
) -> Result<NodalField> {
    let mass = crate::fem::surface_mass_matrix(sm)?;
    mass_times_uniform(&mass, direction)
}

/// Volume-mesh counterpart of [`synthetic_uniform_sensitivity`]:
/// `dJ/dx = M_Ω · (direction per node)`.
pub fn synthetic_uniform_sensitivity_volume(
    vm: &VolumeMesh,
    direction: Vector3<f64>,
) -> Result<NodalField> {
    let mass = crate::fem::bulk_mass_matrix(vm)?;
    mass_times_uniform(&mass, direction)
}

fn mass_times_uniform(mass: &CsrMatrix, direction: Vector3<f64>) -> Result<NodalField> {
    let uniform = NodalField::constant(mass.dim(), direction);
    NodalField::from_flat(mass.spmv_blocked3(uniform.as_slice())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_volume_is_one() {
        let vm = fixtures::kuhn_cube();
        let r = volume_response(&vm).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn volume_scales_cubically() {
        let vm = fixtures::ball(2).unwrap();
        let v0 = volume_response(&vm).unwrap().value;
        let eps = 0.05;
        let mut scaled = vm.positions();
        scaled.scale(1.0 + eps);
        let mut vm2 = vm.clone();
        vm2.set_node_positions(&scaled);
        let v1 = volume_response(&vm2).unwrap().value;
        assert_relative_eq!(v1, v0 * (1.0 + eps).powi(3), max_relative = 1e-12);
    }

    #[test]
    fn volume_gradient_matches_finite_differences() {
        let vm = fixtures::notched_block(3).unwrap();
        let grad = volume_response(&vm).unwrap().gradient;
        let (lo, hi) = vm.bounding_box();
        let h = 1e-6 * (hi - lo).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let dir = NodalField::from_flat(
                (0..3 * vm.n_nodes())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let mut plus = vm.positions();
            plus.add_scaled(&dir, h);
            let mut minus = vm.positions();
            minus.add_scaled(&dir, -h);
            let mut m = vm.clone();
            m.set_node_positions(&plus);
            let vp = volume_response(&m).unwrap().value;
            m.set_node_positions(&minus);
            let vm_ = volume_response(&m).unwrap().value;
            let fd = (vp - vm_) / (2.0 * h);
            let analytic = grad.dot(&dir);
            assert_relative_eq!(analytic, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn interior_volume_gradients_cancel() {
        let vm = fixtures::notched_block(3).unwrap();
        let grad = volume_response(&vm).unwrap().gradient;
        let mut on_boundary = vec![false; vm.n_nodes()];
        for f in vm.boundary_faces() {
            for &i in f {
                on_boundary[i] = true;
            }
        }
        for i in 0..vm.n_nodes() {
            if !on_boundary[i] {
                assert!(
                    grad.node(i).norm() < 1e-13,
                    "interior node {i} has gradient"
                );
            }
        }
    }

    #[test]
    fn unit_tet_apex_gradient() {
        // dV/dp3 = (d1 x d2)/6 = (0, 0, 1/6) for the unit tet.
        let vm = fixtures::unit_tet();
        let g = volume_response(&vm).unwrap().gradient;
        assert_relative_eq!(
            (g.node(3) - Vector3::new(0.0, 0.0, 1.0 / 6.0)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_load_zero_energy_zero_gradient() {
        let vm = fixtures::unit_tet();
        let dirichlet = vec![true, true, true, false];
        let ep = ElasticityParams::default();
        let r = strain_energy_response(&vm, &ep, &dirichlet, &[]).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.gradient.max_abs(), 0.0);
    }

    #[test]
    fn single_tet_matches_dense_solve_oracle() {
        let vm = fixtures::unit_tet();
        let ep = ElasticityParams::from_youngs_poisson(2.0, 0.25).unwrap();
        let dirichlet = vec![true, true, true, false];
        let load = PointLoad {
            node: 3,
            force: Vector3::new(0.0, 0.0, -0.4),
        };
        let r = strain_energy_response(&vm, &ep, &dirichlet, &[load]).unwrap();

        let k = bulk_elastic_stiffness(&vm, &ep, Stiffening::Constant(1.0)).unwrap();
        let dense = k.to_dense();
        // Free dofs are node 3's three components: 9, 10, 11.
        let kd = dense.view((9, 9), (3, 3)).into_owned();
        let f = nalgebra::Vector3::new(0.0, 0.0, -0.4);
        let u = kd.cholesky().unwrap().solve(&f);
        let oracle = 0.5 * f.dot(&u);
        assert_relative_eq!(r.value, oracle, max_relative = 1e-10);
    }

    #[test]
    fn strain_energy_gradient_matches_nested_finite_differences() {
        let vm = fixtures::two_tets();
        let ep = ElasticityParams::default();
        let dirichlet: Vec<bool> = (0..vm.n_nodes()).map(|i| i < 3).collect();
        let loads = [PointLoad {
            node: 3,
            force: Vector3::new(0.1, -0.05, 0.3),
        }];
        let grad = strain_energy_response(&vm, &ep, &dirichlet, &loads)
            .unwrap()
            .gradient;

        let (lo, hi) = vm.bounding_box();
        let h = 1e-6 * (hi - lo).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let dir = NodalField::from_flat(
                (0..3 * vm.n_nodes())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let eval = |sign: f64| {
                let mut x = vm.positions();
                x.add_scaled(&dir, sign * h);
                let mut m = vm.clone();
                m.set_node_positions(&x);
                strain_energy_response(&m, &ep, &dirichlet, &loads)
                    .unwrap()
                    .value
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            let analytic = grad.dot(&dir);
            assert_relative_eq!(analytic, fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn load_on_clamped_node_is_rejected() {
        let vm = fixtures::unit_tet();
        let ep = ElasticityParams::default();
        let dirichlet = vec![true, true, true, false];
        let bad = [PointLoad {
            node: 0,
            force: Vector3::new(1.0, 0.0, 0.0),
        }];
        assert!(strain_energy_response(&vm, &ep, &dirichlet, &bad).is_err());
    }

    #[test]
    fn synthetic_sensitivity_is_tributary_area_weighted() {
        let sm = fixtures::perforated_plate(2).unwrap();
        let dir = Vector3::new(0.0, 0.0, 1.0);
        let field = synthetic_uniform_sensitivity(&sm, dir).unwrap();
        let areas = crate::fem::surface_mass_matrix(&sm).unwrap().row_sums();
        let mut distinct = std::collections::BTreeSet::new();
        for i in 0..sm.n_nodes() {
            assert_relative_eq!(field.node(i).z, areas[i], max_relative = 1e-13);
            assert_eq!(field.node(i).x, 0.0);
            distinct.insert((areas[i] * 1e9) as i64);
        }
        // Non-uniform mesh: the nodal values are not all equal.
        assert!(distinct.len() > 3);
    }

    #[test]
    fn synthetic_sensitivity_sums_to_area_times_direction() {
        let dir = Vector3::new(0.0, 0.0, 1.0);
        for (cells, jitter) in [(4usize, 0.0), (8, 0.15)] {
            let sm = fixtures::plate(cells, jitter, 9).unwrap();
            let f = synthetic_uniform_sensitivity(&sm, dir).unwrap();
            let total: f64 = (0..sm.n_nodes()).map(|i| f.node(i).z).sum();
            assert_relative_eq!(total, sm.total_area(), max_relative = 1e-12);
        }
    }

    #[test]
    fn synthetic_sensitivity_uniform_on_structured_interior() {
        // Uniform-diagonal structured grid: every interior node touches six
        // triangles of equal area, so tributary areas coincide.
        let cells = 6usize;
        let n = cells + 1;
        let mut nodes = Vec::new();
        for j in 0..n {
            for i in 0..n {
                nodes.push(nalgebra::Point3::new(i as f64, j as f64, 0.0));
            }
        }
        let idx = |i: usize, j: usize| j * n + i;
        let mut tris = Vec::new();
        for j in 0..cells {
            for i in 0..cells {
                tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let sm = crate::mesh::SurfaceMesh::new(nodes, tris, None).unwrap();
        let f = synthetic_uniform_sensitivity(&sm, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let reference = f.node(idx(2, 2)).z;
        for i in 1..cells {
            for j in 1..cells {
                assert_relative_eq!(f.node(idx(i, j)).z, reference, max_relative = 1e-13);
            }
        }
    }
}
