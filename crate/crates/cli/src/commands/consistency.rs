use std::path::PathBuf;

use anyhow::Result;
use clap::ValueEnum;
use nalgebra::Vector3;
use serde_json::json;
use shapefilter::explicit::{ExplicitFilter, ExplicitFilterConfig, KernelSpec, MatrixMode};
use shapefilter::fem::ElasticityParams;
use shapefilter::field::NodalField;
use shapefilter::implicit::{build_bulk_surface_operator, build_surface_operator};
use shapefilter::mesh::io::{write_vtk_surface, write_vtk_volume, VtkField};
use shapefilter::response::{synthetic_uniform_sensitivity, synthetic_uniform_sensitivity_volume};

use super::{csv_writer, filtering_surface, load_volume};
use crate::manifest::ManifestBuilder;
use crate::Cli;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Explicit,
    ImplicitSurface,
    BulkSurface,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    LinearHat,
    GreenRegularized,
}

impl KernelArg {
    pub fn family(self) -> shapefilter::explicit::KernelFamily {
        use shapefilter::explicit::KernelFamily::*;
        match self {
            KernelArg::Gaussian => Gaussian,
            KernelArg::LinearHat => LinearHat,
            KernelArg::GreenRegularized => GreenRegularized,
        }
    }

    fn name(self) -> &'static str {
        match self {
            KernelArg::Gaussian => "gaussian",
            KernelArg::LinearHat => "linear_hat",
            KernelArg::GreenRegularized => "green_regularized",
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub mesh: PathBuf,

    /// Design-flags sidecar (default: every node is a design node).
    #[arg(long)]
    pub flags: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub filter: FilterArg,

    /// Explicit kernel family.
    #[arg(long, value_enum, default_value_t = KernelArg::LinearHat)]
    pub kernel: KernelArg,

    /// Kernel support span (explicit); default 5 mean edge lengths.
    #[arg(long)]
    pub span: Option<f64>,

    /// Damp the explicit filter towards the design-surface boundary.
    #[arg(long, default_value_t = false)]
    pub damping: bool,

    /// Helmholtz radius (implicit); default 1.5 mean edge lengths.
    #[arg(long)]
    pub r_gamma: Option<f64>,

    /// Bulk/surface weighting of the bulk-surface filter.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

/// Builds the uniform continuous sensitivity field (0, 0, 1), maps it to
/// scaled control sensitivities through the chosen filter and reports the
/// per-node deviation from uniform.
pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let direction = Vector3::new(0.0, 0.0, 1.0);
    let mut manifest = ManifestBuilder::new(json!({
        "command": "consistency",
        "mesh": args.mesh.display().to_string(),
        "filter": match args.filter {
            FilterArg::Explicit => "explicit",
            FilterArg::ImplicitSurface => "implicit_surface",
            FilterArg::BulkSurface => "bulk_surface",
        },
        "kernel": args.kernel.name(),
        "span": args.span,
        "damping": args.damping,
        "r_gamma": args.r_gamma,
        "beta": args.beta,
    }));
    manifest.add_input(&args.mesh)?;
    if let Some(f) = &args.flags {
        manifest.add_input(f)?;
    }

    let csv_path = cli.out.join("consistency.csv");
    let vtk_path = cli.out.join("consistency.vtk");
    let (positions, scaled): (Vec<[f64; 3]>, NodalField);

    match args.filter {
        FilterArg::Explicit | FilterArg::ImplicitSurface => {
            let sm = filtering_surface(&args.mesh, args.flags.as_deref())?;
            let field = synthetic_uniform_sensitivity(&sm, direction)?;
            let (cons, scal) = match args.filter {
                FilterArg::Explicit => {
                    let span = args.span.unwrap_or(5.0 * sm.mean_edge_length());
                    let config = ExplicitFilterConfig {
                        kernel: KernelSpec::with_span(args.kernel.family(), span)?,
                        damping: args.damping,
                        normalization: true,
                        matrix_mode: MatrixMode::Stored,
                    };
                    let filter = ExplicitFilter::build(config, &sm)?;
                    (
                        filter.transpose_apply(&field)?,
                        filter.scaled_transpose_apply(&field)?,
                    )
                }
                _ => {
                    let r = args.r_gamma.unwrap_or(1.5 * sm.mean_edge_length());
                    let op = build_surface_operator(&sm, r)?;
                    let (c, s) = op.map_sensitivities(&field)?;
                    (c, s)
                }
            };
            write_vtk_surface(
                &vtk_path,
                &sm,
                &[
                    VtkField::Vector {
                        name: "consistent_input",
                        values: &field,
                    },
                    VtkField::Vector {
                        name: "control_consistent",
                        values: &cons,
                    },
                    VtkField::Vector {
                        name: "control_scaled",
                        values: &scal,
                    },
                ],
            )?;
            positions = sm.nodes().iter().map(|p| [p.x, p.y, p.z]).collect();
            scaled = scal;
        }
        FilterArg::BulkSurface => {
            let vm = load_volume(&args.mesh, args.flags.as_deref())?;
            let field = synthetic_uniform_sensitivity_volume(&vm, direction)?;
            let r = args.r_gamma.unwrap_or(1.5 * vm.mean_edge_length());
            let op =
                build_bulk_surface_operator(&vm, &ElasticityParams::default(), r, args.beta, None)?;
            let (cons, scal) = op.map_sensitivities(&field)?;
            write_vtk_volume(
                &vtk_path,
                &vm,
                &[
                    VtkField::Vector {
                        name: "consistent_input",
                        values: &field,
                    },
                    VtkField::Vector {
                        name: "control_consistent",
                        values: &cons,
                    },
                    VtkField::Vector {
                        name: "control_scaled",
                        values: &scal,
                    },
                ],
            )?;
            positions = vm.nodes().iter().map(|p| [p.x, p.y, p.z]).collect();
            scaled = scal;
        }
    }

    let mut writer = csv_writer(&csv_path)?;
    writer.write_record([
        "node",
        "x",
        "y",
        "z",
        "scaled_x",
        "scaled_y",
        "scaled_z",
        "deviation",
    ])?;
    let mut max_deviation = 0.0f64;
    for i in 0..scaled.n_nodes() {
        let s = scaled.node(i);
        let deviation = (s - direction).norm();
        max_deviation = max_deviation.max(deviation);
        writer.write_record([
            i.to_string(),
            format!("{:.17e}", positions[i][0]),
            format!("{:.17e}", positions[i][1]),
            format!("{:.17e}", positions[i][2]),
            format!("{:.17e}", s.x),
            format!("{:.17e}", s.y),
            format!("{:.17e}", s.z),
            format!("{deviation:.17e}"),
        ])?;
    }
    writer.flush()?;

    println!("max relative deviation from uniform: {max_deviation:.6e}");
    manifest.add_output(&csv_path);
    manifest.add_output(&vtk_path);
    manifest.write(&cli.out)
}
