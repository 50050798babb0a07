//! Legacy ASCII VTK export (STRUCTURED_POINTS, one point-data scalar array).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::VoxelGrid;
use crate::error::{Error, Result};

/// Scalar types that can be written as a VTK point-data array.
pub trait VtkValue: Copy {
    const VTK_TYPE: &'static str;
    fn write_to(self, out: &mut String);
}

impl VtkValue for u8 {
    const VTK_TYPE: &'static str = "unsigned_char";
    fn write_to(self, out: &mut String) {
        let _ = write!(out, "{self}");
    }
}

impl VtkValue for f32 {
    const VTK_TYPE: &'static str = "float";
    fn write_to(self, out: &mut String) {
        let _ = write!(out, "{self:e}");
    }
}

impl VtkValue for f64 {
    const VTK_TYPE: &'static str = "float";
    fn write_to(self, out: &mut String) {
        let _ = write!(out, "{:e}", self as f32);
    }
}

/// Writes `grid` as a structured-points dataset whose spacing is the voxel size.
pub fn export_vtk<T: VtkValue>(grid: &VoxelGrid<T>, name: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [nx, ny, nz] = grid.dims();
    let s = grid.voxel_size();
    let name: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    let mut out = String::with_capacity(grid.len() * 4 + 256);
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "sdfwick {name}");
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} {nz}");
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {s} {s} {s}");
    let _ = writeln!(out, "POINT_DATA {}", grid.len());
    let _ = writeln!(out, "SCALARS {name} {} 1", T::VTK_TYPE);
    out.push_str("LOOKUP_TABLE default\n");
    for row in grid.data().chunks(nx) {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            v.write_to(&mut out);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
