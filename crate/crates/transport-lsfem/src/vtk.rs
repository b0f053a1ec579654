//! Legacy ASCII VTK output for piecewise-constant cell data on triangle
//! meshes.

use std::io::{self, Write};

use crate::mesh::Mesh;

/// Writes the mesh and the named per-element scalar fields as a legacy VTK
/// unstructured grid. Every field must hold one value per element.
pub fn write_vtk<W: Write>(
    out: &mut W,
    mesh: &Mesh,
    cell_fields: &[(&str, &[f64])],
) -> io::Result<()> {
    for (name, values) in cell_fields {
        assert_eq!(
            values.len(),
            mesh.elements.len(),
            "cell field `{name}` does not match the element count"
        );
    }

    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "transport flux solution")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(out, "POINTS {} double", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} 0", v.pos.x, v.pos.y)?;
    }

    let m = mesh.elements.len();
    writeln!(out, "CELLS {} {}", m, 4 * m)?;
    for e in &mesh.elements {
        writeln!(out, "3 {} {} {}", e.vertices[0], e.vertices[1], e.vertices[2])?;
    }
    writeln!(out, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(out, "5")?;
    }

    if !cell_fields.is_empty() {
        writeln!(out, "CELL_DATA {m}")?;
        for (name, values) in cell_fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for value in *values {
                writeln!(out, "{value}")?;
            }
        }
    }
    Ok(())
}
