use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use serde::Deserialize;
use shapefilter::explicit::{ExplicitFilterConfig, KernelFamily, KernelSpec, MatrixMode};
use shapefilter::fem::ElasticityParams;
use shapefilter::mesh::io::{write_vtk_volume, VtkField};
use shapefilter::mesh::VolumeMesh;
use shapefilter::optimize::{
    run_optimization_with, ConstraintSpec, FilterChoice, OptimizationConfig, ResponseKind,
    SequentialSurfaceFilter, StepSize, TerminationReason,
};
use shapefilter::response::PointLoad;

use super::{csv_writer, load_volume};
use crate::manifest::ManifestBuilder;
use crate::Cli;

#[derive(clap::Args)]
pub struct Args {
    /// JSON config file; may also be given via the global --config flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Versioned optimization config (strict: unknown keys are errors).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeFile {
    version: u32,
    /// Mesh path, relative to the config file's directory.
    mesh: String,
    #[serde(default)]
    design_flags: Option<String>,
    objective: ResponseFile,
    #[serde(default)]
    constraint: Option<ConstraintFile>,
    filter: FilterFile,
    /// Constant step size; omitted = auto (first step moves 1% of the
    /// bounding-box diagonal).
    #[serde(default)]
    step_size: Option<f64>,
    max_iterations: usize,
    #[serde(default)]
    min_jacobian_stop: f64,
    /// Write a geometry snapshot every k accepted iterations (0 = only
    /// initial and final).
    #[serde(default = "default_snapshot_every")]
    snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ResponseFile {
    Volume,
    StrainEnergy {
        #[serde(default = "default_youngs")]
        youngs: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
        dirichlet: NodeSet,
        loads: Vec<LoadFile>,
    },
}

fn default_youngs() -> f64 {
    1.0
}

fn default_poisson() -> f64 {
    0.3
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSet {
    #[serde(default)]
    ranges: Vec<[usize; 2]>,
    #[serde(default)]
    nodes: Vec<usize>,
}

impl NodeSet {
    fn mask(&self, n: usize) -> Result<Vec<bool>> {
        let mut mask = vec![false; n];
        for r in &self.ranges {
            if r[0] > r[1] || r[1] > n {
                bail!("node range [{}, {}) out of bounds (n = {n})", r[0], r[1]);
            }
            for m in &mut mask[r[0]..r[1]] {
                *m = true;
            }
        }
        for &i in &self.nodes {
            if i >= n {
                bail!("node index {i} out of bounds (n = {n})");
            }
            mask[i] = true;
        }
        Ok(mask)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadFile {
    node: usize,
    force: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    response: ResponseFile,
    target: f64,
    tolerance: f64,
    #[serde(default = "default_rho")]
    rho: f64,
}

fn default_rho() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FilterFile {
    BulkSurface {
        r_gamma: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_youngs")]
        youngs: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
    },
    SequentialExplicit {
        kernel: KernelFamily,
        radius: f64,
        #[serde(default = "default_true")]
        damping: bool,
        #[serde(default = "default_true")]
        normalization: bool,
        #[serde(default)]
        matrix_free: bool,
        #[serde(default = "default_youngs")]
        youngs: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
    },
    SequentialHelmholtz {
        r_gamma: f64,
        #[serde(default = "default_youngs")]
        youngs: f64,
        #[serde(default = "default_poisson")]
        poisson: f64,
    },
}

fn default_beta() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn response_kind(file: &ResponseFile, vm: &VolumeMesh) -> Result<ResponseKind> {
    Ok(match file {
        ResponseFile::Volume => ResponseKind::Volume,
        ResponseFile::StrainEnergy {
            youngs,
            poisson,
            dirichlet,
            loads,
        } => ResponseKind::StrainEnergy {
            elasticity: ElasticityParams::from_youngs_poisson(*youngs, *poisson)?,
            dirichlet_nodes: dirichlet.mask(vm.n_nodes())?,
            loads: loads
                .iter()
                .map(|l| PointLoad {
                    node: l.node,
                    force: Vector3::new(l.force[0], l.force[1], l.force[2]),
                })
                .collect(),
        },
    })
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let config_path = args
        .config
        .as_ref()
        .or(cli.config.as_ref())
        .context("optimize needs a config file (--config <path>)")?;
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let file: OptimizeFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    if file.version != 1 {
        bail!("unsupported config version {}", file.version);
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mesh_path = base.join(&file.mesh);
    let flags_path = file.design_flags.as_ref().map(|f| base.join(f));

    let mut manifest = ManifestBuilder::new(serde_json::from_str(&text)?);
    manifest.add_input(config_path)?;
    manifest.add_input(&mesh_path)?;
    if let Some(fp) = &flags_path {
        manifest.add_input(fp)?;
    }

    let vm = load_volume(&mesh_path, flags_path.as_deref())?;
    let objective = response_kind(&file.objective, &vm)?;
    let constraint = file
        .constraint
        .as_ref()
        .map(|c| {
            Ok::<_, anyhow::Error>(ConstraintSpec {
                response: response_kind(&c.response, &vm)?,
                target: c.target,
                tolerance: c.tolerance,
                rho: c.rho,
            })
        })
        .transpose()?;
    let filter = match &file.filter {
        FilterFile::BulkSurface {
            r_gamma,
            beta,
            youngs,
            poisson,
        } => FilterChoice::BulkSurface {
            r_gamma: *r_gamma,
            beta: *beta,
            elasticity: ElasticityParams::from_youngs_poisson(*youngs, *poisson)?,
        },
        FilterFile::SequentialExplicit {
            kernel,
            radius,
            damping,
            normalization,
            matrix_free,
            youngs,
            poisson,
        } => FilterChoice::Sequential {
            surface: SequentialSurfaceFilter::Explicit(ExplicitFilterConfig {
                kernel: KernelSpec::new(*kernel, *radius)?,
                damping: *damping,
                normalization: *normalization,
                matrix_mode: if *matrix_free {
                    MatrixMode::MatrixFree
                } else {
                    MatrixMode::Stored
                },
            }),
            elasticity: ElasticityParams::from_youngs_poisson(*youngs, *poisson)?,
        },
        FilterFile::SequentialHelmholtz {
            r_gamma,
            youngs,
            poisson,
        } => FilterChoice::Sequential {
            surface: SequentialSurfaceFilter::Helmholtz { r_gamma: *r_gamma },
            elasticity: ElasticityParams::from_youngs_poisson(*youngs, *poisson)?,
        },
    };

    let config = OptimizationConfig {
        objective,
        constraint,
        step_size: match file.step_size {
            Some(a) => StepSize::Fixed(a),
            None => StepSize::Auto,
        },
        max_iterations: file.max_iterations,
        filter,
        min_jacobian_stop: file.min_jacobian_stop,
        stagnation_tolerance: 1e-8,
        stagnation_window: 5,
    };

    let out = cli.out.clone();
    let mut snapshots: Vec<PathBuf> = Vec::new();
    let snapshot_every = file.snapshot_every;
    let (state, final_mesh) = run_optimization_with(&config, &vm, |iteration, mesh| {
        if iteration == 0 || (snapshot_every > 0 && iteration % snapshot_every == 0) {
            let path = out.join(format!("shape_{iteration:06}.vtk"));
            write_vtk_volume(&path, mesh, &[])?;
            snapshots.push(path);
        }
        Ok(())
    })?;

    // Final geometry snapshot (with the control field attached).
    let final_path = out.join("shape_final.vtk");
    write_vtk_volume(
        &final_path,
        &final_mesh,
        &[VtkField::Vector {
            name: "control",
            values: &state.control,
        }],
    )?;
    snapshots.push(final_path);

    let history_path = out.join("history.csv");
    let mut writer = csv_writer(&history_path)?;
    writer.write_record([
        "iteration",
        "objective",
        "constraint",
        "step_norm",
        "min_jacobian",
        "wall_time_s",
    ])?;
    for r in &state.history {
        writer.write_record([
            r.iteration.to_string(),
            format!("{:.17e}", r.objective),
            r.constraint
                .map(|c| format!("{c:.17e}"))
                .unwrap_or_default(),
            format!("{:.17e}", r.step_norm),
            format!("{:.17e}", r.min_jacobian),
            format!("{:.6}", r.wall_time),
        ])?;
    }
    writer.flush()?;

    for p in &snapshots {
        manifest.add_output(p);
    }
    manifest.add_output(&history_path);
    manifest.write(&cli.out)?;

    println!(
        "terminated after {} iterations: {:?}; objective {} -> {}",
        state.iteration,
        state.termination,
        state
            .history
            .first()
            .map(|r| r.objective)
            .unwrap_or(f64::NAN),
        state
            .history
            .last()
            .map(|r| r.objective)
            .unwrap_or(f64::NAN),
    );
    if let TerminationReason::SolverFailure(msg) = &state.termination {
        bail!("optimization aborted by a solver failure (partial outputs kept): {msg}");
    }
    Ok(())
}
