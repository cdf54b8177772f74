//! Legacy ASCII VTK export.
//!
//! Points are the mesh nodes in storage order. Every element is split into
//! `k^d` linear cells over its node lattice, so nodal fields attach to points
//! directly.

use std::fmt::Write as _;
use std::path::Path;

use super::write_text;
use crate::error::{Result, TmopError};
use crate::field::DiscreteField;
use crate::mesh::Mesh;

const VTK_QUAD: u8 = 9;
const VTK_HEXAHEDRON: u8 = 12;

/// Local lattice indices of the linear sub-cells, in VTK vertex order.
fn sub_cells(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let m = k + 1;
    let mut cells = Vec::new();
    if dim == 2 {
        for j in 0..k {
            for i in 0..k {
                let at = |di: usize, dj: usize| (i + di) + m * (j + dj);
                cells.push(vec![at(0, 0), at(1, 0), at(1, 1), at(0, 1)]);
            }
        }
    } else {
        for l in 0..k {
            for j in 0..k {
                for i in 0..k {
                    let at = |di: usize, dj: usize, dl: usize| (i + di) + m * (j + dj) + m * m * (l + dl);
                    cells.push(vec![
                        at(0, 0, 0),
                        at(1, 0, 0),
                        at(1, 1, 0),
                        at(0, 1, 0),
                        at(0, 0, 1),
                        at(1, 0, 1),
                        at(1, 1, 1),
                        at(0, 1, 1),
                    ]);
                }
            }
        }
    }
    cells
}

fn sanitize(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_graphic() { c } else { '_' }).collect();
    if s.is_empty() {
        "field".into()
    } else {
        s
    }
}

pub fn format_vtk(mesh: &Mesh, fields: &[(&str, &DiscreteField)]) -> Result<String> {
    for (name, f) in fields {
        if f.len() != mesh.num_nodes() {
            return Err(TmopError::invalid(format!(
                "field '{name}' has {} values but the mesh has {} nodes",
                f.len(),
                mesh.num_nodes()
            )));
        }
    }
    let d = mesh.dim();
    let local = sub_cells(d, mesh.degree());
    let verts = if d == 2 { 4 } else { 8 };
    let cell_type = if d == 2 { VTK_QUAD } else { VTK_HEXAHEDRON };
    let num_cells = mesh.num_elements() * local.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nhigh-order mesh, degree {}\nASCII\nDATASET UNSTRUCTURED_GRID", mesh.degree());
    let _ = writeln!(s, "POINTS {} double", mesh.num_nodes());
    for n in 0..mesh.num_nodes() {
        let p = mesh.node(n);
        let z = if d == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{:?} {:?} {z:?}", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {num_cells} {}", num_cells * (verts + 1));
    for e in 0..mesh.num_elements() {
        let conn = mesh.element(e);
        for cell in &local {
            let ids: Vec<String> = cell.iter().map(|&i| conn[i].to_string()).collect();
            let _ = writeln!(s, "{verts} {}", ids.join(" "));
        }
    }
    let _ = writeln!(s, "CELL_TYPES {num_cells}");
    for _ in 0..num_cells {
        let _ = writeln!(s, "{cell_type}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
        for (name, f) in fields {
            let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", sanitize(name));
            for v in f.values() {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    Ok(s)
}

pub fn export_vtk(mesh: &Mesh, fields: &[(&str, &DiscreteField)], path: &Path) -> Result<()> {
    write_text(path, &format_vtk(mesh, fields)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_counts() {
        let one = Mesh::unit_square(1, 3).unwrap();
        let text = format_vtk(&one, &[]).unwrap();
        assert!(text.contains("CELLS 9 45"));
        let cube = Mesh::unit_cube(2, 2).unwrap();
        let text = format_vtk(&cube, &[]).unwrap();
        assert!(text.contains("CELLS 64 576"));
    }

    #[test]
    fn sub_cells_are_positively_oriented() {
        let mesh = Mesh::unit_square(1, 2).unwrap();
        for c in sub_cells(2, 2) {
            let p: Vec<&[f64]> = c.iter().map(|&i| mesh.node(mesh.element(0)[i])).collect();
            let cross = (p[1][0] - p[0][0]) * (p[3][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[3][0] - p[0][0]);
            assert!(cross > 0.0);
        }
    }
}
