//! `hofield` nodal field files: `hofield 1`, `nodes N`, then N values.

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_finite, read_text, write_text, LineReader};
use crate::error::Result;
use crate::field::DiscreteField;
use crate::mesh::Mesh;

const MAGIC: &str = "hofield 1";

pub fn format_field(field: &DiscreteField) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}\nnodes {}", field.len());
    for v in field.values() {
        let _ = writeln!(s, "{v:?}");
    }
    s
}

pub fn write_field(field: &DiscreteField, path: &Path) -> Result<()> {
    write_text(path, &format_field(field))
}

pub fn read_field(path: &Path, mesh: &Mesh) -> Result<DiscreteField> {
    parse_field(&read_text(path)?, path, mesh)
}

pub fn parse_field(text: &str, path: &Path, mesh: &Mesh) -> Result<DiscreteField> {
    let mut r = LineReader::new(text, path);
    let (n, l) = r.next("'hofield 1' header")?;
    if l != MAGIC {
        return Err(r.error(n, format!("expected '{MAGIC}', found '{l}'")));
    }
    let count: usize = r.header("nodes", "header")?;
    if count != mesh.num_nodes() {
        return Err(r.error(2, format!("field has {count} nodes but the mesh has {}", mesh.num_nodes())));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let (n, l) = r.next(&format!("value {} of {count}", i + 1))?;
        values.push(parse_finite(&r, n, l, "value")?);
    }
    r.finish()?;
    DiscreteField::new(mesh, values)
}
