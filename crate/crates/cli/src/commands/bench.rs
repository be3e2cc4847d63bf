use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use shapefilter::explicit::{
    ExplicitFilter, ExplicitFilterConfig, KernelFamily, KernelSpec, MatrixMode,
};
use shapefilter::fem::ElasticityParams;
use shapefilter::field::NodalField;
use shapefilter::implicit::{
    build_bulk_surface_operator, build_surface_operator, helmholtz_radius_for_span,
};
use shapefilter::mesh::io::LoadedMesh;
use shapefilter::mesh::{extract_boundary, SurfaceMesh, VolumeMesh};

use super::{csv_writer, fitted_slope, load_any_mesh, require};
use crate::manifest::ManifestBuilder;
use crate::Cli;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub mesh: PathBuf,

    /// Support-span to element-size ratios p/a.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0])]
    pub ratios: Vec<f64>,

    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

/// Median wall time for one filter application on fresh geometry (build
/// plus apply — the per-iteration cost of an optimization loop) per p/a
/// ratio, for the explicit stored / matrix-free filters, the implicit
/// surface filter, and the bulk-surface filter when the mesh is a volume.
pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    require(args.repetitions >= 3, "repetitions must be at least 3")?;
    let loaded = load_any_mesh(&args.mesh)?;
    let (surface, volume): (SurfaceMesh, Option<VolumeMesh>) = match loaded {
        LoadedMesh::Surface(sm) => (sm, None),
        LoadedMesh::Volume(vm) => {
            let (sm, _) = extract_boundary(&vm)?;
            (sm, Some(vm))
        }
    };
    let a = surface.mean_edge_length();
    let mut manifest = ManifestBuilder::new(json!({
        "command": "bench",
        "mesh": args.mesh.display().to_string(),
        "ratios": args.ratios,
        "repetitions": args.repetitions,
        "mean_edge_length": a,
    }));
    manifest.add_input(&args.mesh)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let surf_field = NodalField::from_flat(
        (0..3 * surface.n_nodes())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let vol_field = volume.as_ref().map(|vm| {
        NodalField::from_flat(
            (0..3 * vm.n_nodes())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .expect("finite")
    });

    let median = |mut times: Vec<f64>| -> f64 {
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        times[times.len() / 2]
    };

    let csv_path = cli.out.join("bench.csv");
    let mut writer = csv_writer(&csv_path)?;
    writer.write_record(["filter", "ratio", "median_seconds", "repetitions"])?;

    let mut results: Vec<(&'static str, Vec<f64>)> = vec![
        ("explicit_stored", Vec::new()),
        ("explicit_matrix_free", Vec::new()),
        ("implicit_surface", Vec::new()),
    ];
    if volume.is_some() {
        results.push(("bulk_surface", Vec::new()));
    }

    for &ratio in &args.ratios {
        let span = ratio * a;
        let r_gamma = helmholtz_radius_for_span(&surface, span)?;

        for mode in [MatrixMode::Stored, MatrixMode::MatrixFree] {
            let config = ExplicitFilterConfig {
                kernel: KernelSpec::with_span(KernelFamily::Gaussian, span)?,
                damping: false,
                normalization: true,
                matrix_mode: mode,
            };
            let times: Vec<f64> = (0..args.repetitions)
                .map(|_| {
                    let t = Instant::now();
                    let filter = ExplicitFilter::build(config, &surface)?;
                    std::hint::black_box(filter.forward(&surf_field)?);
                    Ok(t.elapsed().as_secs_f64())
                })
                .collect::<Result<_>>()?;
            let idx = if mode == MatrixMode::Stored { 0 } else { 1 };
            results[idx].1.push(median(times));
        }

        let times: Vec<f64> = (0..args.repetitions)
            .map(|_| {
                let t = Instant::now();
                let op = build_surface_operator(&surface, r_gamma)?;
                std::hint::black_box(op.forward(&surf_field)?);
                Ok(t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        results[2].1.push(median(times));

        if let (Some(vm), Some(field)) = (&volume, &vol_field) {
            let ep = ElasticityParams::default();
            let times: Vec<f64> = (0..args.repetitions)
                .map(|_| {
                    let t = Instant::now();
                    let op = build_bulk_surface_operator(vm, &ep, r_gamma, 1.0, None)?;
                    std::hint::black_box(op.forward(field)?);
                    Ok(t.elapsed().as_secs_f64())
                })
                .collect::<Result<_>>()?;
            results[3].1.push(median(times));
        }
    }

    for (name, times) in &results {
        for (k, &ratio) in args.ratios.iter().enumerate() {
            writer.write_record([
                name.to_string(),
                format!("{ratio}"),
                format!("{:.9e}", times[k]),
                args.repetitions.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    manifest.add_output(&csv_path);

    let trend_path = cli.out.join("bench_trend.csv");
    let mut trend = csv_writer(&trend_path)?;
    trend.write_record(["filter", "fitted_slope_seconds_per_ratio"])?;
    for (name, times) in &results {
        let slope = fitted_slope(&args.ratios, times);
        trend.write_record([name.to_string(), format!("{slope:.9e}")])?;
        println!("{name}: {times:?} s, slope {slope:.3e} s/ratio");
    }
    trend.flush()?;
    manifest.add_output(&trend_path);
    manifest.write(&cli.out)
}
