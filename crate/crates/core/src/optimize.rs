//! Projected steepest descent in control space with mass-matrix
//! preconditioning and mesh-quality stopping.
//!
//! Geometry updates run through a shape filter each iteration. The
//! update rule `Δs = -α dj/ds`, `Δx = A Δs` is a quasi-Newton step with
//! the mass matrix as diagonal Hessian approximation; operators are
//! rebuilt on the updated geometry every iteration, so the control field
//! is tracked incrementally alongside the geometry.

use std::time::Instant;

use crate::explicit::{ExplicitFilter, ExplicitFilterConfig};
use crate::fem::{bulk_elastic_stiffness, ElasticityParams, Stiffening};
use crate::field::NodalField;
use crate::implicit::{build_bulk_surface_operator, SurfaceFilterOperator};
use crate::mesh::VolumeMesh;
use crate::response::{strain_energy_response, volume_response, PointLoad, ResponseValue};
use crate::sparse::{cg_solve_strict, CsrMatrix};
use crate::{Error, Result};

/// A response selectable as objective or constraint.
#[derive(Debug, Clone)]
pub enum ResponseKind {
    Volume,
    StrainEnergy {
        elasticity: ElasticityParams,
        dirichlet_nodes: Vec<bool>,
        loads: Vec<PointLoad>,
    },
}

impl ResponseKind {
    pub fn evaluate(&self, vm: &VolumeMesh) -> Result<ResponseValue> {
        match self {
            ResponseKind::Volume => volume_response(vm),
            ResponseKind::StrainEnergy {
                elasticity,
                dirichlet_nodes,
                loads,
            } => strain_energy_response(vm, elasticity, dirichlet_nodes, loads),
        }
    }
}

/// Single equality-style constraint with a feasibility tolerance band.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub response: ResponseKind,
    pub target: f64,
    pub tolerance: f64,
    /// Feasibility-correction weight in the projection formula.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum StepSize {
    /// Scale the first step so the largest nodal move is 1% of the
    /// bounding-box diagonal, then keep that α constant.
    Auto,
    Fixed(f64),
}

/// Surface filter used by the sequential (filter-then-mesh-motion)
/// pipeline.
#[derive(Debug, Clone)]
pub enum SequentialSurfaceFilter {
    Explicit(ExplicitFilterConfig),
    /// Surface Helmholtz filter with the design-surface boundary nodes
    /// pinned (edge interpolation as a strong Dirichlet condition).
    Helmholtz {
        r_gamma: f64,
    },
}

#[derive(Debug, Clone)]
pub enum FilterChoice {
    /// One bulk-surface solve moves boundary and interior nodes together.
    BulkSurface {
        r_gamma: f64,
        beta: f64,
        elasticity: ElasticityParams,
    },
    /// Surface filtering first, then a Jacobian-stiffened pseudo-elastic
    /// solve drags the interior along.
    Sequential {
        surface: SequentialSurfaceFilter,
        elasticity: ElasticityParams,
    },
}

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    pub objective: ResponseKind,
    pub constraint: Option<ConstraintSpec>,
    pub step_size: StepSize,
    pub max_iterations: usize,
    pub filter: FilterChoice,
    /// Stop when the minimum element Jacobian falls to or below this.
    pub min_jacobian_stop: f64,
    pub stagnation_tolerance: f64,
    pub stagnation_window: usize,
}

impl OptimizationConfig {
    pub fn new(objective: ResponseKind, filter: FilterChoice, max_iterations: usize) -> Self {
        Self {
            objective,
            constraint: None,
            step_size: StepSize::Auto,
            max_iterations,
            filter,
            min_jacobian_stop: 0.0,
            stagnation_tolerance: 1e-8,
            stagnation_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub constraint: Option<f64>,
    /// Euclidean norm of the geometry step that led into this state
    /// (zero for the initial record).
    pub step_norm: f64,
    pub min_jacobian: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminationReason {
    MaxIterations,
    /// The proposed step would have driven the minimum element Jacobian
    /// to or below the stop threshold; the last valid state is kept.
    MeshDistortion,
    Stagnation,
    SolverFailure(String),
}

#[derive(Debug, Clone)]
pub struct OptimizationState {
    /// Completed iterations (equals the index of the last valid state).
    pub iteration: usize,
    pub control: NodalField,
    pub geometry: NodalField,
    pub history: Vec<IterationRecord>,
    pub min_jacobian: f64,
    pub termination: TerminationReason,
}

/// Projected steepest-descent direction for one constraint:
/// `-(g - (⟨g,c⟩/⟨c,c⟩) c) - ρ · violation · c / ⟨c,c⟩` with mass-metric
/// inner products. The result is M-orthogonal to `c` up to the
/// feasibility-correction term.
pub fn project_constraint(
    g: &NodalField,
    c: &NodalField,
    violation: f64,
    rho: f64,
    mass: &CsrMatrix,
) -> Result<NodalField> {
    let inner = |a: &NodalField, b: &NodalField| -> Result<f64> {
        let mb = mass.spmv_blocked3(b.as_slice())?;
        Ok(a.as_slice().iter().zip(&mb).map(|(x, y)| x * y).sum())
    };
    let cc = inner(c, c)?;
    let scale = g.max_abs().max(c.max_abs()).max(1.0);
    if !(cc > 1e-28 * scale * scale) {
        return Err(Error::Singular("constraint gradient vanishes".into()));
    }
    let gc = inner(g, c)?;
    let mut dir = g.clone();
    dir.add_scaled(c, -gc / cc);
    dir.scale(-1.0);
    dir.add_scaled(c, -rho * violation / cc);
    Ok(dir)
}

/// One steepest-descent step through a frozen bulk-surface operator:
/// maps shape sensitivities to the scaled control direction and returns
/// `(Δs, Δx)` for the given step size.
pub fn bulk_step(
    op: &crate::implicit::BulkSurfaceFilterOperator,
    djdx: &NodalField,
    alpha: f64,
) -> Result<(NodalField, NodalField)> {
    let (_, scaled) = op.map_sensitivities(djdx)?;
    let mut ds = scaled;
    ds.scale(-alpha);
    let dx = op.forward(&ds)?;
    Ok((ds, dx))
}

/// Interior displacement of a Jacobian-stiffened pseudo-elastic solve with
/// the given displacements prescribed on every boundary node. Returns the
/// full displacement field (boundary entries as prescribed).
///
/// The stiffening reference cancels in a pure Dirichlet solve, so element
/// stiffnesses are scaled by `1/(J^e)²` directly.
pub fn sequential_mesh_motion(
    vm: &VolumeMesh,
    ep: &ElasticityParams,
    boundary_displacement: &NodalField,
) -> Result<NodalField> {
    let n = vm.n_nodes();
    if boundary_displacement.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            expected: 3 * n,
            got: boundary_displacement.len(),
        });
    }
    let mut on_boundary = vec![false; n];
    for f in vm.boundary_faces() {
        for &i in f {
            on_boundary[i] = true;
        }
    }
    let stiffness = bulk_elastic_stiffness(vm, ep, Stiffening::MeshJacobian { j0: 1.0 })?;

    let mut full = vec![0.0; 3 * n];
    for i in 0..n {
        if on_boundary[i] {
            let v = boundary_displacement.node(i);
            full[3 * i] = v.x;
            full[3 * i + 1] = v.y;
            full[3 * i + 2] = v.z;
        }
    }
    let coupled = stiffness.spmv(&full)?;
    let keep: Vec<bool> = (0..3 * n).map(|dof| !on_boundary[dof / 3]).collect();
    if keep.iter().any(|&k| k) {
        let (k_ff, map) = stiffness.restrict(&keep);
        let rhs: Vec<f64> = map.iter().map(|&dof| -coupled[dof]).collect();
        let u = cg_solve_strict(&k_ff, &rhs, 1e-12, (10 * k_ff.dim()).max(1000))?;
        for (red, &dof) in map.iter().enumerate() {
            full[dof] = u[red];
        }
    }
    NodalField::from_flat(full)
}

/// Runs the optimization loop on a copy of the mesh. See
/// [`run_optimization_with`] for the observer variant.
pub fn run_optimization(
    config: &OptimizationConfig,
    vm: &VolumeMesh,
) -> Result<(OptimizationState, VolumeMesh)> {
    run_optimization_with(config, vm, |_, _| Ok(()))
}

/// Runs the optimization loop, invoking `observer(iteration, mesh)` on the
/// initial state and after every accepted step. Solver failures terminate
/// the run with the partial history preserved.
pub fn run_optimization_with(
    config: &OptimizationConfig,
    vm: &VolumeMesh,
    mut observer: impl FnMut(usize, &VolumeMesh) -> Result<()>,
) -> Result<(OptimizationState, VolumeMesh)> {
    let start = Instant::now();
    let mut mesh = vm.clone();
    let mut control = mesh.positions();
    let mut last_step_norm = 0.0;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut previous_j0: Option<f64> = None;
    let mut alpha = match config.step_size {
        StepSize::Fixed(a) => {
            if !(a > 0.0) {
                // α = 0 is allowed and leaves the state untouched;
                // negative steps are rejected.
                if a < 0.0 {
                    return Err(Error::InvalidConfig(format!("negative step size {a}")));
                }
                Some(0.0)
            } else {
                Some(a)
            }
        }
        StepSize::Auto => None,
    };
    let (lo, hi) = mesh.bounding_box();
    let bbox_diag = (hi - lo).norm();

    observer(0, &mesh)?;

    let mut iteration = 0usize;
    let termination;
    loop {
        // Evaluate responses on the current (always valid) state.
        let objective = match config.objective.evaluate(&mesh) {
            Ok(r) => r,
            Err(e) => {
                termination = TerminationReason::SolverFailure(e.to_string());
                break;
            }
        };
        let constraint = match &config.constraint {
            Some(spec) => match spec.response.evaluate(&mesh) {
                Ok(r) => Some(r),
                Err(e) => {
                    termination = TerminationReason::SolverFailure(e.to_string());
                    break;
                }
            },
            None => None,
        };
        history.push(IterationRecord {
            iteration,
            objective: objective.value,
            constraint: constraint.as_ref().map(|c| c.value),
            step_norm: last_step_norm,
            min_jacobian: mesh.min_jacobian(),
            wall_time: start.elapsed().as_secs_f64(),
        });

        if stagnated(
            &history,
            config.stagnation_window,
            config.stagnation_tolerance,
        ) {
            termination = TerminationReason::Stagnation;
            break;
        }
        if iteration >= config.max_iterations {
            termination = TerminationReason::MaxIterations;
            break;
        }

        // Map sensitivities through the filter and form the step.
        let step = propose_step(
            config,
            &mesh,
            &objective,
            constraint.as_ref(),
            &mut alpha,
            bbox_diag,
            &mut previous_j0,
        );
        let (ds, dx) = match step {
            Ok(pair) => pair,
            Err(e) => {
                termination = TerminationReason::SolverFailure(e.to_string());
                break;
            }
        };

        let mut proposed = mesh.positions();
        proposed.add_scaled(&dx, 1.0);
        let mut probe = mesh.clone();
        probe.set_node_positions(&proposed);
        if probe.min_jacobian() <= config.min_jacobian_stop {
            termination = TerminationReason::MeshDistortion;
            break;
        }

        mesh.set_node_positions(&proposed);
        control.add_scaled(&ds, 1.0);
        last_step_norm = dx.norm();
        iteration += 1;
        observer(iteration, &mesh)?;
    }

    let state = OptimizationState {
        iteration,
        control,
        geometry: mesh.positions(),
        history,
        min_jacobian: mesh.min_jacobian(),
        termination,
    };
    Ok((state, mesh))
}

fn stagnated(history: &[IterationRecord], window: usize, tol: f64) -> bool {
    if history.len() < window + 1 {
        return false;
    }
    let recent = &history[history.len() - window - 1..];
    let scale = recent
        .iter()
        .fold(0.0f64, |m, r| m.max(r.objective.abs()))
        .max(1e-300);
    let lo = recent.iter().fold(f64::INFINITY, |m, r| m.min(r.objective));
    let hi = recent
        .iter()
        .fold(f64::NEG_INFINITY, |m, r| m.max(r.objective));
    (hi - lo) / scale < tol
}

#[allow(clippy::too_many_arguments)]
fn propose_step(
    config: &OptimizationConfig,
    mesh: &VolumeMesh,
    objective: &ResponseValue,
    constraint: Option<&ResponseValue>,
    alpha: &mut Option<f64>,
    bbox_diag: f64,
    previous_j0: &mut Option<f64>,
) -> Result<(NodalField, NodalField)> {
    match &config.filter {
        FilterChoice::BulkSurface {
            r_gamma,
            beta,
            elasticity,
        } => {
            let op = build_bulk_surface_operator(mesh, elasticity, *r_gamma, *beta, *previous_j0)?;
            *previous_j0 = Some(op.j0());
            let (_, dj_obj) = op.map_sensitivities(&objective.gradient)?;
            let direction = match (constraint, &config.constraint) {
                (Some(con), Some(spec)) => {
                    let (_, dj_con) = op.map_sensitivities(&con.gradient)?;
                    let violation = con.value - spec.target;
                    project_constraint(&dj_obj, &dj_con, violation, spec.rho, op.mass())?
                }
                _ => {
                    let mut d = dj_obj;
                    d.scale(-1.0);
                    d
                }
            };
            let a = resolve_alpha(alpha, bbox_diag, || op.forward(&direction))?;
            let mut ds = direction;
            ds.scale(a);
            let dx = op.forward(&ds)?;
            Ok((ds, dx))
        }
        FilterChoice::Sequential {
            surface,
            elasticity,
        } => {
            let (submesh, map) = crate::fem::design_surface(mesh)?;
            let g_obj = objective.gradient.gather(&map);
            enum Built {
                Explicit(ExplicitFilter),
                Helmholtz(SurfaceFilterOperator),
            }
            let filter = match surface {
                SequentialSurfaceFilter::Explicit(cfg) => {
                    Built::Explicit(ExplicitFilter::build(*cfg, &submesh)?)
                }
                SequentialSurfaceFilter::Helmholtz { r_gamma } => {
                    let mut pinned = vec![false; submesh.n_nodes()];
                    for e in submesh.boundary_edges() {
                        pinned[e[0]] = true;
                        pinned[e[1]] = true;
                    }
                    Built::Helmholtz(SurfaceFilterOperator::build(
                        &submesh,
                        *r_gamma,
                        Some(pinned),
                    )?)
                }
            };
            let scaled = |g: &NodalField| -> Result<NodalField> {
                match &filter {
                    Built::Explicit(f) => f.scaled_transpose_apply(g),
                    Built::Helmholtz(op) => Ok(op.map_sensitivities(g)?.1),
                }
            };
            let forward = |s: &NodalField| -> Result<NodalField> {
                match &filter {
                    Built::Explicit(f) => f.forward(s),
                    Built::Helmholtz(op) => op.forward(s),
                }
            };
            let dj_obj = scaled(&g_obj)?;
            let direction = match (constraint, &config.constraint) {
                (Some(con), Some(spec)) => {
                    let dj_con = scaled(&con.gradient.gather(&map))?;
                    let violation = con.value - spec.target;
                    let mass = crate::fem::surface_mass_matrix(&submesh)?;
                    project_constraint(&dj_obj, &dj_con, violation, spec.rho, &mass)?
                }
                _ => {
                    let mut d = dj_obj;
                    d.scale(-1.0);
                    d
                }
            };

            let full_motion = |ds_sub: &NodalField| -> Result<(NodalField, NodalField)> {
                let dx_sub = forward(ds_sub)?;
                let mut boundary_disp = NodalField::zeros(mesh.n_nodes());
                dx_sub.scatter_add_into(&map, &mut boundary_disp);
                let dx = sequential_mesh_motion(mesh, elasticity, &boundary_disp)?;
                let mut ds_full = NodalField::zeros(mesh.n_nodes());
                ds_sub.scatter_add_into(&map, &mut ds_full);
                Ok((ds_full, dx))
            };
            let a = resolve_alpha(alpha, bbox_diag, || Ok(full_motion(&direction)?.1))?;
            let mut ds = direction;
            ds.scale(a);
            full_motion(&ds)
        }
    }
}

fn resolve_alpha(
    alpha: &mut Option<f64>,
    bbox_diag: f64,
    unit_step: impl FnOnce() -> Result<NodalField>,
) -> Result<f64> {
    if let Some(a) = *alpha {
        return Ok(a);
    }
    let probe = unit_step()?;
    let max_move = probe.max_node_norm();
    let a = if max_move > 0.0 {
        0.01 * bbox_diag / max_move
    } else {
        0.0
    };
    *alpha = Some(a);
    Ok(a)
}
