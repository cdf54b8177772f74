//! `homesh` mesh files.
//!
//! ```text
//! homesh 1
//! dim D
//! degree K
//! elements E
//! <E lines of (K+1)^D zero-based node indices, x fastest>
//! nodes N
//! <N lines of D coordinates>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_finite, read_text, write_text, LineReader};
use crate::error::{Result, TmopError};
use crate::mesh::Mesh;

const MAGIC: &str = "homesh 1";

pub fn format_mesh(mesh: &Mesh) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}\ndim {d}\ndegree {}\nelements {}", mesh.degree(), mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let line: Vec<String> = mesh.element(e).iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let _ = writeln!(s, "nodes {}", mesh.num_nodes());
    for n in 0..mesh.num_nodes() {
        let line: Vec<String> = mesh.node(n).iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    write_text(path, &format_mesh(mesh))
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    parse_mesh(&read_text(path)?, path)
}

/// Parses a mesh; `path` only labels errors.
pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let mut r = LineReader::new(text, path);
    let (n, l) = r.next("'homesh 1' header")?;
    if l != MAGIC {
        return Err(r.error(n, format!("expected '{MAGIC}', found '{l}'")));
    }
    let dim: usize = r.header("dim", "header")?;
    if dim != 2 && dim != 3 {
        return Err(r.error(2, format!("dim must be 2 or 3, found {dim}")));
    }
    let degree: usize = r.header("degree", "header")?;
    if degree == 0 {
        return Err(r.error(3, "degree must be at least 1"));
    }
    let num_elements: usize = r.header("elements", "header")?;
    let nb = (degree + 1).pow(dim as u32);
    let mut elements = Vec::with_capacity(num_elements * nb);
    let mut element_lines = Vec::with_capacity(num_elements);
    for e in 0..num_elements {
        let (n, l) = r.next(&format!("element line {} of {num_elements} in the elements section", e + 1))?;
        elements.extend(r.tokens::<usize>(n, l, nb, "node indices")?);
        element_lines.push(n);
    }
    let num_nodes: usize = r.header("nodes", "nodes section")?;
    let mut coords = Vec::with_capacity(num_nodes * dim);
    for i in 0..num_nodes {
        let (n, l) = r.next(&format!("coordinate line {} of {num_nodes} in the nodes section", i + 1))?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != dim {
            return Err(r.error(n, format!("expected {dim} coordinates, found {}", tok.len())));
        }
        for t in tok {
            coords.push(parse_finite(&r, n, t, "coordinate")?);
        }
    }
    r.finish()?;
    for (e, conn) in elements.chunks(nb).enumerate() {
        if let Some(&bad) = conn.iter().find(|&&i| i >= num_nodes) {
            return Err(r.error(element_lines[e], format!("node index {bad} out of range (mesh has {num_nodes} nodes)")));
        }
    }
    Mesh::new(dim, degree, coords, elements).map_err(|e| match e {
        TmopError::InvalidMesh(msg) => TmopError::InvalidMesh(format!("{}: {msg}", path.display())),
        other => other,
    })
}
