//! Minimal legacy ASCII VTK writer for triangle meshes with cell scalars.

use std::io::{self, Write};

use nalgebra::Point2;

/// VTK cell type id of a linear triangle.
pub const VTK_TRIANGLE: u8 = 5;

pub fn write_triangles<W: Write>(
    mut out: W,
    title: &str,
    points: &[Point2<f64>],
    triangles: &[[usize; 3]],
    cell_data: &[(&str, &[f64])],
) -> io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    // The title line may not contain newlines.
    writeln!(out, "{}", title.replace('\n', " "))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(out, "{:.17e} {:.17e} 0", p.x, p.y)?;
    }
    writeln!(out, "CELLS {} {}", triangles.len(), 4 * triangles.len())?;
    for t in triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", triangles.len())?;
    for _ in triangles {
        writeln!(out, "{VTK_TRIANGLE}")?;
    }
    if !cell_data.is_empty() {
        writeln!(out, "CELL_DATA {}", triangles.len())?;
        for (name, values) in cell_data {
            if values.len() != triangles.len() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("cell field {name} has {} values for {} cells", values.len(), triangles.len()),
                ));
            }
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(out, "{v:.17e}")?;
            }
        }
    }
    Ok(())
}
