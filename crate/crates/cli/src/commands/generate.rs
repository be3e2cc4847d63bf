use anyhow::{bail, Result};
use clap::ValueEnum;
use serde_json::json;
use shapefilter::fixtures;
use shapefilter::mesh::io::{write_vtk_surface, write_vtk_volume};

use crate::manifest::ManifestBuilder;
use crate::Cli;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Plate,
    PerforatedPlate,
    NotchedBlock,
    Ball,
}

impl Fixture {
    fn name(self) -> &'static str {
        match self {
            Fixture::Plate => "plate",
            Fixture::PerforatedPlate => "perforated_plate",
            Fixture::NotchedBlock => "notched_block",
            Fixture::Ball => "ball",
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    pub name: Fixture,

    /// Cells per side (plate), ring multiplier (perforated plate), cells
    /// per half-side (notched block) or subdivision level (ball).
    #[arg(long, default_value_t = 10)]
    pub resolution: usize,

    /// In-plane node jitter of the plate, as a fraction of the spacing.
    #[arg(long, default_value_t = 0.15)]
    pub jitter: f64,
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    if args.resolution < 2 {
        bail!("resolution must be at least 2");
    }
    let mut manifest = ManifestBuilder::new(json!({
        "command": "generate-fixture",
        "name": args.name.name(),
        "resolution": args.resolution,
        "jitter": args.jitter,
        "seed": cli.seed,
    }));
    let mesh_path = cli.out.join(format!("{}.vtk", args.name.name()));

    match args.name {
        Fixture::Plate => {
            let sm = fixtures::plate(args.resolution, args.jitter, cli.seed)?;
            write_vtk_surface(&mesh_path, &sm, &[])?;
        }
        Fixture::PerforatedPlate => {
            let sm = fixtures::perforated_plate(args.resolution)?;
            write_vtk_surface(&mesh_path, &sm, &[])?;
        }
        Fixture::NotchedBlock => {
            if args.resolution < 3 {
                bail!("the notched block needs resolution >= 3");
            }
            let vm = fixtures::notched_block(args.resolution)?;
            write_vtk_volume(&mesh_path, &vm, &[])?;
            // Sidecar with the non-design boundary nodes.
            let fixed: Vec<usize> = vm
                .design_flags()
                .iter()
                .enumerate()
                .filter(|(_, &d)| !d)
                .map(|(i, _)| i)
                .collect();
            let sidecar = json!({
                "version": 1,
                "default": "design",
                "groups": { "fixed": { "nodes": fixed } },
                "non_design": ["fixed"],
            });
            let flags_path = cli.out.join(format!("{}.flags.json", args.name.name()));
            std::fs::write(&flags_path, serde_json::to_string_pretty(&sidecar)?)?;
            manifest.add_output(&flags_path);
        }
        Fixture::Ball => {
            // Resolution 2 keeps the plain icosahedron boundary, whose
            // twelve vertices are all equivalent under its symmetry group.
            let vm = fixtures::ball(args.resolution - 1)?;
            write_vtk_volume(&mesh_path, &vm, &[])?;
        }
    }
    manifest.add_output(&mesh_path);
    println!("wrote {}", mesh_path.display());
    manifest.write(&cli.out)
}
