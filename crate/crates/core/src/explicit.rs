//! Explicit (convolution) shape filtering: kernels discretized at mesh
//! nodes, damping towards the design-surface boundary, consistency
//! normalization, and the forward/transpose maps in stored-matrix and
//! matrix-free form.
//!
//! The filter acts componentwise: one scalar n × n operator applied to the
//! x, y and z components of a nodal field.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::NodalField;
use crate::mesh::queries::{closest_point_projection, GridIndex};
use crate::mesh::SurfaceMesh;
use crate::sparse::{CsrMatrix, TripletBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    LinearHat,
    GreenRegularized,
}

/// A filter kernel: family plus radius. The support span `p` (the diameter
/// beyond which the kernel is truncated to zero) is derived from the
/// radius: `2r` for the linear hat (its exact support) and `6r` for the
/// Gaussian (3σ, dropping weights below ~1.1e-2 of the peak) and the
/// regularized Green kernel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub radius: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kernel radius must be positive, got {radius}"
            )));
        }
        Ok(Self { family, radius })
    }

    /// Radius that gives this family the support span `p`.
    pub fn with_span(family: KernelFamily, span: f64) -> Result<Self> {
        let radius = match family {
            KernelFamily::LinearHat => span / 2.0,
            KernelFamily::Gaussian | KernelFamily::GreenRegularized => span / 6.0,
        };
        Self::new(family, radius)
    }

    /// Support span (diameter).
    pub fn span(&self) -> f64 {
        match self.family {
            KernelFamily::LinearHat => 2.0 * self.radius,
            KernelFamily::Gaussian | KernelFamily::GreenRegularized => 6.0 * self.radius,
        }
    }

    /// Kernel value at distance `d`, truncated to zero beyond span/2.
    pub fn eval(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        if d > 0.5 * self.span() {
            return 0.0;
        }
        let r = self.radius;
        match self.family {
            KernelFamily::Gaussian => {
                (1.0 / (r * (2.0 * std::f64::consts::PI).sqrt())) * (-0.5 * (d / r).powi(2)).exp()
            }
            KernelFamily::LinearHat => ((r - d) / r).max(0.0),
            KernelFamily::GreenRegularized => {
                (-d / r).exp() / (1.0 + 4.0 * std::f64::consts::PI * d / (r * r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    /// Assemble the filter matrix once; applications are sparse products.
    Stored,
    /// Keep per-node weights only; applications cycle through the nodes.
    MatrixFree,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExplicitFilterConfig {
    pub kernel: KernelSpec,
    pub damping: bool,
    pub normalization: bool,
    pub matrix_mode: MatrixMode,
}

/// Damping factor `1 - F(x, x_cpp)` of a node, clamped to [0, 1]; nodes on
/// the design-surface boundary curve are fully frozen for kernels with
/// unit peak.
pub fn damping_factor(kernel: &KernelSpec, sm: &SurfaceMesh, node: usize) -> Result<f64> {
    let p = &sm.nodes()[node];
    let cpp = closest_point_projection(sm, p)?;
    Ok((1.0 - kernel.eval((p - cpp).norm())).clamp(0.0, 1.0))
}

/// An explicit filter built for one geometry snapshot.
///
/// `A = D · V⁻¹ · W · M` with `W(i, j) = F(xᵢ, xⱼ)` the kernel discretized
/// at the mesh nodes, `M` the consistent surface mass matrix, `V` the
/// diagonal of kernel volumes `V(i) = Σⱼ W(i, j) ∫ Nⱼ dΓ` (the integral of
/// the nodally interpolated kernel, which makes unit row sums exact), and
/// `D` the diagonal damping. With normalization off, `V = I`; with damping
/// off, `D = I`.
#[derive(Debug)]
pub struct ExplicitFilter {
    config: ExplicitFilterConfig,
    mass: CsrMatrix,
    damping: Vec<f64>,
    volumes: Vec<f64>,
    neighbors: Vec<Vec<u32>>,
    weights: Vec<Vec<f64>>,
    matrix: Option<CsrMatrix>,
}

impl ExplicitFilter {
    pub fn build(config: ExplicitFilterConfig, sm: &SurfaceMesh) -> Result<Self> {
        if config.damping && sm.boundary_edges().is_empty() {
            return Err(Error::InvalidConfig(
                "damping requires a design surface with a nonempty boundary; \
                 disable damping on closed surfaces"
                    .into(),
            ));
        }
        let n = sm.n_nodes();
        let mass = crate::fem::surface_mass_matrix(sm)?;
        let areas = mass.row_sums();
        let nodes = sm.nodes();
        let index = GridIndex::new(nodes);
        let reach = 0.5 * config.kernel.span();

        let per_node: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nbr = index.neighbors_within(&nodes[i], reach);
                let w: Vec<f64> = nbr
                    .iter()
                    .map(|&j| config.kernel.eval((nodes[j] - nodes[i]).norm()))
                    .collect();
                (nbr.into_iter().map(|j| j as u32).collect(), w)
            })
            .collect();

        let mut neighbors = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut volumes = Vec::with_capacity(n);
        for (i, (nbr, w)) in per_node.into_iter().enumerate() {
            let v = if config.normalization {
                nbr.iter()
                    .zip(&w)
                    .map(|(&j, &wj)| wj * areas[j as usize])
                    .sum()
            } else {
                1.0
            };
            if nbr.is_empty() || (config.normalization && !(v > 0.0)) {
                return Err(Error::EmptySupport(i));
            }
            neighbors.push(nbr);
            weights.push(w);
            volumes.push(v);
        }

        let damping = if config.damping {
            (0..n)
                .map(|i| damping_factor(&config.kernel, sm, i))
                .collect::<Result<Vec<f64>>>()?
        } else {
            vec![1.0; n]
        };

        let matrix = if config.matrix_mode == MatrixMode::Stored {
            let rows: Vec<Vec<(usize, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let scale = damping[i] / volumes[i];
                    let mut row: Vec<(usize, f64)> = Vec::new();
                    for (&j, &wij) in neighbors[i].iter().zip(&weights[i]) {
                        let (cols, vals) = mass.row(j as usize);
                        for (&k, &mjk) in cols.iter().zip(vals) {
                            row.push((k, scale * wij * mjk));
                        }
                    }
                    row
                })
                .collect();
            let mut triplets = TripletBuffer::with_capacity(rows.iter().map(Vec::len).sum());
            for (i, row) in rows.into_iter().enumerate() {
                for (k, v) in row {
                    triplets.push(i, k, v);
                }
            }
            Some(CsrMatrix::assemble(&triplets, n, false)?)
        } else {
            None
        };

        Ok(Self {
            config,
            mass,
            damping,
            volumes,
            neighbors,
            weights,
            matrix,
        })
    }

    pub fn config(&self) -> &ExplicitFilterConfig {
        &self.config
    }

    pub fn n_nodes(&self) -> usize {
        self.volumes.len()
    }

    /// The assembled scalar filter matrix (stored mode only).
    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.matrix.as_ref()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn damping_diagonal(&self) -> &[f64] {
        &self.damping
    }

    /// Geometry from control: `x = A s`, componentwise.
    pub fn forward(&self, s: &NodalField) -> Result<NodalField> {
        self.check_len(s)?;
        match &self.matrix {
            Some(a) => Ok(NodalField::from_flat(a.spmv_blocked3(s.as_slice())?)?),
            None => {
                let m = self.mass.spmv_blocked3(s.as_slice())?;
                let n = self.n_nodes();
                let out: Vec<[f64; 3]> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let scale = self.damping[i] / self.volumes[i];
                        let mut acc = [0.0; 3];
                        for (&j, &wij) in self.neighbors[i].iter().zip(&self.weights[i]) {
                            let j = j as usize;
                            for c in 0..3 {
                                acc[c] += wij * m[3 * j + c];
                            }
                        }
                        [acc[0] * scale, acc[1] * scale, acc[2] * scale]
                    })
                    .collect();
                let mut x = NodalField::zeros(n);
                for (i, v) in out.into_iter().enumerate() {
                    x.as_mut_slice()[3 * i..3 * i + 3].copy_from_slice(&v);
                }
                Ok(x)
            }
        }
    }

    /// Control sensitivities from shape sensitivities: `dJ/ds = Aᵀ dJ/dx`,
    /// the exact transpose of [`ExplicitFilter::forward`].
    pub fn transpose_apply(&self, djdx: &NodalField) -> Result<NodalField> {
        self.check_len(djdx)?;
        match &self.matrix {
            Some(a) => {
                let mut out = NodalField::zeros(self.n_nodes());
                for c in 0..3 {
                    let comp = djdx.component(c);
                    out.set_component(c, &a.spmv_transpose(&comp)?);
                }
                Ok(out)
            }
            None => {
                let u = self.scaled_transpose_apply(djdx)?;
                Ok(NodalField::from_flat(
                    self.mass.spmv_blocked3(u.as_slice())?,
                )?)
            }
        }
    }

    /// Scaled control sensitivities `dj/ds = M⁻¹ Aᵀ dJ/dx = W V⁻¹ D dJ/dx`,
    /// computed through the algebraic identity (no mass solve).
    pub fn scaled_transpose_apply(&self, djdx: &NodalField) -> Result<NodalField> {
        self.check_len(djdx)?;
        let n = self.n_nodes();
        // t = V⁻¹ D g, then u = W t by symmetric gather.
        let mut t = vec![0.0; 3 * n];
        for i in 0..n {
            let scale = self.damping[i] / self.volumes[i];
            for c in 0..3 {
                t[3 * i + c] = scale * djdx.as_slice()[3 * i + c];
            }
        }
        let out: Vec<[f64; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = [0.0; 3];
                for (&j, &wij) in self.neighbors[i].iter().zip(&self.weights[i]) {
                    let j = j as usize;
                    for c in 0..3 {
                        acc[c] += wij * t[3 * j + c];
                    }
                }
                acc
            })
            .collect();
        let mut u = NodalField::zeros(n);
        for (i, v) in out.into_iter().enumerate() {
            u.as_mut_slice()[3 * i..3 * i + 3].copy_from_slice(&v);
        }
        Ok(u)
    }

    fn check_len(&self, f: &NodalField) -> Result<()> {
        if f.n_nodes() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.n_nodes(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Kernel evaluation helper shared by the profile commands: samples values
/// at the given distances, normalized so the value at distance zero is one.
pub fn normalized_profile(kernel: &KernelSpec, distances: &[f64]) -> Vec<f64> {
    let peak = kernel.eval(0.0);
    distances.iter().map(|&d| kernel.eval(d) / peak).collect()
}

/// Nodes of `sm` within `span/2` of `center`, with their distances.
pub fn profile_sample_nodes(
    sm: &SurfaceMesh,
    center: &Point3<f64>,
    span: f64,
) -> Vec<(usize, f64)> {
    let index = GridIndex::new(sm.nodes());
    index
        .neighbors_within(center, 0.5 * span)
        .into_iter()
        .map(|i| (i, (sm.nodes()[i] - center).norm()))
        .collect()
}
