//! Mesh file I/O: legacy ASCII VTK unstructured grids (cell types 5 and
//! 10), Wavefront OBJ triangle surfaces, and the JSON sidecar that assigns
//! design/non-design roles to node-index ranges or named groups.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;
use serde::Deserialize;

use super::{SurfaceMesh, VolumeMesh};
use crate::field::NodalField;
use crate::{Error, Result};

pub const VTK_TRIANGLE: u32 = 5;
pub const VTK_TETRA: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Surface,
    Volume,
}

#[derive(Debug)]
pub enum LoadedMesh {
    Surface(SurfaceMesh),
    Volume(VolumeMesh),
}

impl LoadedMesh {
    pub fn into_surface(self) -> Result<SurfaceMesh> {
        match self {
            LoadedMesh::Surface(sm) => Ok(sm),
            LoadedMesh::Volume(_) => Err(Error::InvalidConfig(
                "expected a surface mesh, got a volume mesh".into(),
            )),
        }
    }

    pub fn into_volume(self) -> Result<VolumeMesh> {
        match self {
            LoadedMesh::Volume(vm) => Ok(vm),
            LoadedMesh::Surface(_) => Err(Error::InvalidConfig(
                "expected a volume mesh, got a surface mesh".into(),
            )),
        }
    }
}

/// Loads a mesh from a `.vtk` (legacy ASCII unstructured grid) or `.obj`
/// file and validates it.
pub fn load_mesh(path: &Path, kind: MeshKind) -> Result<LoadedMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => {
            if kind == MeshKind::Volume {
                return Err(parse_error(path, "OBJ files hold triangle surfaces only"));
            }
            Ok(LoadedMesh::Surface(load_obj(path)?))
        }
        "vtk" => load_vtk(path, kind),
        other => Err(parse_error(
            path,
            &format!("unsupported mesh extension '{other}' (expected .vtk or .obj)"),
        )),
    }
}

fn parse_error(path: &Path, message: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn load_vtk(path: &Path, kind: MeshKind) -> Result<LoadedMesh> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') || l.trim_start().starts_with("# vtk"))
        .skip(1) // "# vtk DataFile Version x"
        .skip(1) // title
        .flat_map(|l| l.split_whitespace())
        .peekable();

    let mut expect = |want: &str| -> Result<()> {
        match tokens.next() {
            Some(t) if t.eq_ignore_ascii_case(want) => Ok(()),
            Some(t) => Err(parse_error(
                path,
                &format!("expected '{want}', found '{t}'"),
            )),
            None => Err(parse_error(
                path,
                &format!("expected '{want}', found end of file"),
            )),
        }
    };
    expect("ASCII")?;
    expect("DATASET")?;
    expect("UNSTRUCTURED_GRID")?;
    expect("POINTS")?;

    // Re-borrow the iterator for value parsing.
    let mut text_iter = text
        .lines()
        .flat_map(|l| l.split_whitespace())
        .skip_while(|t| !t.eq_ignore_ascii_case("POINTS"))
        .skip(1);
    let n_points: usize = next_parse(path, &mut text_iter, "point count")?;
    let _dtype = text_iter
        .next()
        .ok_or_else(|| parse_error(path, "missing POINTS data type"))?;
    let mut nodes = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let x: f64 = next_parse(path, &mut text_iter, "point coordinate")?;
        let y: f64 = next_parse(path, &mut text_iter, "point coordinate")?;
        let z: f64 = next_parse(path, &mut text_iter, "point coordinate")?;
        nodes.push(Point3::new(x, y, z));
    }

    let section = text_iter
        .next()
        .ok_or_else(|| parse_error(path, "missing CELLS section"))?;
    if !section.eq_ignore_ascii_case("CELLS") {
        return Err(parse_error(
            path,
            &format!("expected CELLS, found '{section}'"),
        ));
    }
    let n_cells: usize = next_parse(path, &mut text_iter, "cell count")?;
    let _total: usize = next_parse(path, &mut text_iter, "cell list size")?;
    let mut raw_cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let k: usize = next_parse(path, &mut text_iter, "cell node count")?;
        let mut cell = Vec::with_capacity(k);
        for _ in 0..k {
            cell.push(next_parse::<usize>(
                path,
                &mut text_iter,
                "cell node index",
            )?);
        }
        raw_cells.push(cell);
    }
    let section = text_iter
        .next()
        .ok_or_else(|| parse_error(path, "missing CELL_TYPES section"))?;
    if !section.eq_ignore_ascii_case("CELL_TYPES") {
        return Err(parse_error(
            path,
            &format!("expected CELL_TYPES, found '{section}'"),
        ));
    }
    let n_types: usize = next_parse(path, &mut text_iter, "cell type count")?;
    if n_types != n_cells {
        return Err(parse_error(
            path,
            "CELL_TYPES count differs from CELLS count",
        ));
    }
    let mut triangles = Vec::new();
    let mut tets = Vec::new();
    for cell in raw_cells {
        let t: u32 = next_parse(path, &mut text_iter, "cell type")?;
        match t {
            VTK_TRIANGLE => {
                if cell.len() != 3 {
                    return Err(parse_error(path, "triangle cell without 3 nodes"));
                }
                triangles.push([cell[0], cell[1], cell[2]]);
            }
            VTK_TETRA => {
                if cell.len() != 4 {
                    return Err(parse_error(path, "tetra cell without 4 nodes"));
                }
                tets.push([cell[0], cell[1], cell[2], cell[3]]);
            }
            other => {
                return Err(parse_error(
                    path,
                    &format!("unsupported VTK cell type {other} (only 5 and 10)"),
                ))
            }
        }
    }

    match kind {
        MeshKind::Surface => {
            if !tets.is_empty() {
                return Err(parse_error(
                    path,
                    "file contains tetrahedra; load it as a volume mesh",
                ));
            }
            if triangles.is_empty() {
                return Err(parse_error(path, "no triangle cells found"));
            }
            Ok(LoadedMesh::Surface(SurfaceMesh::new(
                nodes, triangles, None,
            )?))
        }
        MeshKind::Volume => {
            if tets.is_empty() {
                return Err(parse_error(path, "no tetrahedral cells found"));
            }
            // Triangle cells (typically exported boundary faces) are ignored;
            // the boundary is recomputed from the tets.
            Ok(LoadedMesh::Volume(VolumeMesh::new(nodes, tets, None)?))
        }
    }
}

fn next_parse<T: std::str::FromStr>(
    path: &Path,
    iter: &mut dyn Iterator<Item = &str>,
    what: &str,
) -> Result<T> {
    let tok = iter
        .next()
        .ok_or_else(|| parse_error(path, &format!("unexpected end of file reading {what}")))?;
    tok.parse::<T>()
        .map_err(|_| parse_error(path, &format!("cannot parse '{tok}' as {what}")))
}

fn load_obj(path: &Path) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path)?;
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in coord.iter_mut() {
                    let tok = parts.next().ok_or_else(|| {
                        parse_error(path, &format!("line {}: short vertex", lineno + 1))
                    })?;
                    *c = tok.parse().map_err(|_| {
                        parse_error(path, &format!("line {}: bad vertex coordinate", lineno + 1))
                    })?;
                }
                nodes.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or(tok);
                        first.parse::<usize>().map_err(|_| {
                            parse_error(path, &format!("line {}: bad face index", lineno + 1))
                        })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(parse_error(
                        path,
                        &format!("line {}: face with fewer than 3 vertices", lineno + 1),
                    ));
                }
                for &i in &idx {
                    if i == 0 {
                        return Err(parse_error(
                            path,
                            &format!("line {}: OBJ indices are 1-based", lineno + 1),
                        ));
                    }
                }
                // Fan triangulation for polygons.
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0] - 1, idx[k] - 1, idx[k + 1] - 1]);
                }
            }
            _ => {} // comments, normals, texture coords
        }
    }
    if triangles.is_empty() {
        return Err(parse_error(path, "no faces found"));
    }
    SurfaceMesh::new(nodes, triangles, None)
}

/// A named point field for [`write_vtk_surface`] / [`write_vtk_volume`].
pub enum VtkField<'a> {
    Scalar {
        name: &'a str,
        values: &'a [f64],
    },
    Vector {
        name: &'a str,
        values: &'a NodalField,
    },
}

pub fn write_vtk_surface(path: &Path, sm: &SurfaceMesh, fields: &[VtkField]) -> Result<()> {
    write_vtk_impl(
        path,
        sm.nodes(),
        sm.triangles().iter().map(|t| t.to_vec()).collect(),
        VTK_TRIANGLE,
        fields,
    )
}

pub fn write_vtk_volume(path: &Path, vm: &VolumeMesh, fields: &[VtkField]) -> Result<()> {
    write_vtk_impl(
        path,
        vm.nodes(),
        vm.tets().iter().map(|t| t.to_vec()).collect(),
        VTK_TETRA,
        fields,
    )
}

/// Legacy ASCII VTK writer. Byte output is deterministic for identical
/// input; coordinates and field values are printed with 17 significant
/// digits so f64 values round-trip exactly.
fn write_vtk_impl(
    path: &Path,
    nodes: &[Point3<f64>],
    cells: Vec<Vec<usize>>,
    cell_type: u32,
    fields: &[VtkField],
) -> Result<()> {
    for field in fields {
        let len_ok = match field {
            VtkField::Scalar { values, .. } => values.len() == nodes.len(),
            VtkField::Vector { values, .. } => values.n_nodes() == nodes.len(),
        };
        if !len_ok {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                got: match field {
                    VtkField::Scalar { values, .. } => values.len(),
                    VtkField::Vector { values, .. } => values.n_nodes(),
                },
            });
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 2.0")?;
    writeln!(f, "shapefilter mesh")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", nodes.len())?;
    for p in nodes {
        writeln!(f, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    let total: usize = cells.iter().map(|c| c.len() + 1).sum();
    writeln!(f, "CELLS {} {}", cells.len(), total)?;
    for c in &cells {
        write!(f, "{}", c.len())?;
        for i in c {
            write!(f, " {i}")?;
        }
        writeln!(f)?;
    }
    writeln!(f, "CELL_TYPES {}", cells.len())?;
    for _ in &cells {
        writeln!(f, "{cell_type}")?;
    }
    if !fields.is_empty() {
        writeln!(f, "POINT_DATA {}", nodes.len())?;
        for field in fields {
            match field {
                VtkField::Scalar { name, values } => {
                    writeln!(f, "SCALARS {name} double 1")?;
                    writeln!(f, "LOOKUP_TABLE default")?;
                    for v in *values {
                        writeln!(f, "{v:.16e}")?;
                    }
                }
                VtkField::Vector { name, values } => {
                    writeln!(f, "VECTORS {name} double")?;
                    for i in 0..values.n_nodes() {
                        let v = values.node(i);
                        writeln!(f, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// JSON sidecar assigning design/non-design roles to nodes.
///
/// Schema (strict, unknown keys are errors):
/// ```json
/// {
///   "version": 1,
///   "default": "design",
///   "groups": { "clamp": { "ranges": [[0, 41]], "nodes": [80] } },
///   "design": ["groupname", ...],
///   "non_design": ["clamp"],
///   "design_ranges": [[10, 20]],
///   "non_design_ranges": [[0, 5]]
/// }
/// ```
/// Ranges are half-open `[start, end)`. Application order: default, then
/// design assignments, then non-design assignments (non-design wins).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFlagsFile {
    pub version: u32,
    #[serde(default = "default_role")]
    pub default: String,
    #[serde(default)]
    pub groups: BTreeMap<String, NodeGroup>,
    #[serde(default)]
    pub design: Vec<String>,
    #[serde(default)]
    pub non_design: Vec<String>,
    #[serde(default)]
    pub design_ranges: Vec<[usize; 2]>,
    #[serde(default)]
    pub non_design_ranges: Vec<[usize; 2]>,
}

fn default_role() -> String {
    "design".into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGroup {
    #[serde(default)]
    pub ranges: Vec<[usize; 2]>,
    #[serde(default)]
    pub nodes: Vec<usize>,
}

pub fn load_design_flags(path: &Path, n_nodes: usize) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path)?;
    let file: DesignFlagsFile =
        serde_json::from_str(&text).map_err(|e| parse_error(path, &e.to_string()))?;
    if file.version != 1 {
        return Err(parse_error(
            path,
            &format!("unsupported design-flags version {}", file.version),
        ));
    }
    let default = match file.default.as_str() {
        "design" => true,
        "non_design" => false,
        other => {
            return Err(parse_error(
                path,
                &format!("unknown default role '{other}'"),
            ))
        }
    };
    let mut flags = vec![default; n_nodes];
    let apply_group = |name: &str, value: bool, flags: &mut Vec<bool>| -> Result<()> {
        let group = file
            .groups
            .get(name)
            .ok_or_else(|| parse_error(path, &format!("unknown group '{name}'")))?;
        for r in &group.ranges {
            apply_range(path, r, value, flags)?;
        }
        for &i in &group.nodes {
            if i >= n_nodes {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: n_nodes,
                });
            }
            flags[i] = value;
        }
        Ok(())
    };
    for r in &file.design_ranges {
        apply_range(path, r, true, &mut flags)?;
    }
    for name in &file.design {
        apply_group(name, true, &mut flags)?;
    }
    for r in &file.non_design_ranges {
        apply_range(path, r, false, &mut flags)?;
    }
    for name in &file.non_design {
        apply_group(name, false, &mut flags)?;
    }
    Ok(flags)
}

fn apply_range(path: &Path, r: &[usize; 2], value: bool, flags: &mut [bool]) -> Result<()> {
    if r[0] > r[1] || r[1] > flags.len() {
        return Err(parse_error(
            path,
            &format!(
                "node range [{}, {}) out of bounds (n = {})",
                r[0],
                r[1],
                flags.len()
            ),
        ));
    }
    for f in &mut flags[r[0]..r[1]] {
        *f = value;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("shapefilter_io_{name}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn vtk_single_tet_roundtrip() {
        let dir = tmpdir("tet");
        let path = dir.join("tet.vtk");
        let vm = fixtures::unit_tet();
        write_vtk_volume(&path, &vm, &[]).unwrap();
        let loaded = load_mesh(&path, MeshKind::Volume)
            .unwrap()
            .into_volume()
            .unwrap();
        assert_eq!(loaded.n_nodes(), 4);
        assert_eq!(loaded.tets().len(), 1);
        assert_eq!(loaded.boundary_faces().len(), 4);
        for (a, b) in loaded.nodes().iter().zip(vm.nodes()) {
            assert_relative_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
        assert_eq!(loaded.tets(), vm.tets());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_write_is_deterministic() {
        let dir = tmpdir("det");
        let vm = fixtures::unit_tet();
        let p1 = dir.join("a.vtk");
        let p2 = dir.join("b.vtk");
        let field = vm.positions();
        let fields = [VtkField::Vector {
            name: "coords",
            values: &field,
        }];
        write_vtk_volume(&p1, &vm, &fields).unwrap();
        write_vtk_volume(&p2, &vm, &fields).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.contains("VECTORS coords double"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_geometry_only_has_no_point_data() {
        let dir = tmpdir("geo");
        let path = dir.join("sq.vtk");
        write_vtk_surface(&path, &fixtures::unit_square(), &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("POINT_DATA"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn obj_unit_square() {
        let dir = tmpdir("obj");
        let path = dir.join("square.obj");
        std::fs::write(
            &path,
            "# unit square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n",
        )
        .unwrap();
        let sm = load_mesh(&path, MeshKind::Surface)
            .unwrap()
            .into_surface()
            .unwrap();
        assert_eq!(sm.n_nodes(), 4);
        assert_eq!(sm.triangles().len(), 2);
        assert_eq!(sm.boundary_edges().len(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_zero_area_triangle_is_degenerate_error() {
        let dir = tmpdir("degen");
        let path = dir.join("bad.vtk");
        std::fs::write(
            &path,
            "# vtk DataFile Version 2.0\nbad\nASCII\nDATASET UNSTRUCTURED_GRID\n\
             POINTS 4 double\n0 0 0\n1 0 0\n2 0 0\n0 1 0\n\
             CELLS 2 8\n3 0 1 3\n3 0 1 2\nCELL_TYPES 2\n5\n5\n",
        )
        .unwrap();
        let err = load_mesh(&path, MeshKind::Surface).unwrap_err();
        match err {
            Error::DegenerateElement { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn design_flags_sidecar() {
        let dir = tmpdir("flags");
        let path = dir.join("flags.json");
        std::fs::write(
            &path,
            r#"{
                "version": 1,
                "default": "design",
                "groups": { "clamp": { "ranges": [[0, 2]], "nodes": [5] } },
                "non_design": ["clamp"],
                "non_design_ranges": [[7, 8]]
            }"#,
        )
        .unwrap();
        let flags = load_design_flags(&path, 8).unwrap();
        assert_eq!(
            flags,
            vec![false, false, true, true, true, false, true, false]
        );

        std::fs::write(&path, r#"{ "version": 1, "bogus": 3 }"#).unwrap();
        assert!(load_design_flags(&path, 8).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
