pub mod bench;
pub mod cond_study;
pub mod consistency;
pub mod generate;
pub mod kernel_profile;
pub mod optimize;

use std::path::Path;

use anyhow::{bail, Context, Result};
use shapefilter::mesh::io::{load_design_flags, load_mesh, LoadedMesh, MeshKind};
use shapefilter::mesh::{SurfaceMesh, VolumeMesh};

/// Loads a mesh of either kind: volume when the file has tets, surface
/// otherwise.
pub fn load_any_mesh(path: &Path) -> Result<LoadedMesh> {
    if path.extension().and_then(|e| e.to_str()) == Some("obj") {
        return Ok(load_mesh(path, MeshKind::Surface)?);
    }
    match load_mesh(path, MeshKind::Volume) {
        Ok(vm) => Ok(vm),
        Err(shapefilter::Error::Parse { .. }) => Ok(load_mesh(path, MeshKind::Surface)?),
        Err(e) => Err(e.into()),
    }
}

pub fn load_volume(path: &Path, flags: Option<&Path>) -> Result<VolumeMesh> {
    let mut vm = load_mesh(path, MeshKind::Volume)
        .with_context(|| format!("loading volume mesh {}", path.display()))?
        .into_volume()?;
    if let Some(fp) = flags {
        vm.set_design_flags(load_design_flags(fp, vm.n_nodes())?)?;
    }
    Ok(vm)
}

/// The surface a surface-filter command operates on: the mesh itself, or
/// the boundary of a volume mesh.
pub fn filtering_surface(path: &Path, flags: Option<&Path>) -> Result<SurfaceMesh> {
    match load_any_mesh(path)? {
        LoadedMesh::Surface(mut sm) => {
            if let Some(fp) = flags {
                sm.set_design_flags(load_design_flags(fp, sm.n_nodes())?)?;
            }
            Ok(sm)
        }
        LoadedMesh::Volume(mut vm) => {
            if let Some(fp) = flags {
                vm.set_design_flags(load_design_flags(fp, vm.n_nodes())?)?;
            }
            let (sm, _) = shapefilter::mesh::extract_boundary(&vm)?;
            Ok(sm)
        }
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(file))
}

/// Least-squares slope of y over x.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|&a| (a - mx).powi(2)).sum();
    cov / var
}

/// Node closest to the bounding-box center.
pub fn central_node(sm: &SurfaceMesh) -> usize {
    let (lo, hi) = sm.bounding_box();
    let center = nalgebra_center(lo, hi);
    sm.nodes()
        .iter()
        .enumerate()
        .min_by(|(_, p), (_, q)| {
            (*p - center)
                .norm()
                .partial_cmp(&(*q - center).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .expect("mesh has nodes")
}

fn nalgebra_center(lo: nalgebra::Point3<f64>, hi: nalgebra::Point3<f64>) -> nalgebra::Point3<f64> {
    nalgebra::Point3::from((lo.coords + hi.coords) / 2.0)
}

pub fn require(cond: bool, msg: &str) -> Result<()> {
    if !cond {
        bail!("{msg}");
    }
    Ok(())
}
