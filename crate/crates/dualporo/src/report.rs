//! Deterministic output writers: CSV series and legacy structured-points VTK
//! fields, all floats at 17 significant digits so regenerated runs are
//! byte-identical.

use crate::error::Result;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// 17-significant-digit scientific formatting (f64 round-trips exactly).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvWriter {
    buf: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvWriter {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        let mut first = true;
        for v in values {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{}", fmt_f64(*v));
        }
        self.buf.push('\n');
    }

    pub fn row_mixed(&mut self, values: &[CsvValue]) {
        debug_assert_eq!(values.len(), self.columns);
        let mut first = true;
        for v in values {
            if !first {
                self.buf.push(',');
            }
            first = false;
            match v {
                CsvValue::Float(x) => {
                    let _ = write!(self.buf, "{}", fmt_f64(*x));
                }
                CsvValue::Int(i) => {
                    let _ = write!(self.buf, "{i}");
                }
                CsvValue::Text(s) => {
                    let _ = write!(self.buf, "{s}");
                }
            }
        }
        self.buf.push('\n');
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.buf)?;
        Ok(())
    }

    pub fn contents(&self) -> &str {
        &self.buf
    }
}

pub enum CsvValue {
    Float(f64),
    Int(i64),
    Text(String),
}

/// Legacy-VTK structured-points file with one cell-centered scalar field.
pub fn write_vtk_cells(
    path: &Path,
    title: &str,
    name: &str,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    values: &[f64],
) -> Result<()> {
    let mut buf = String::new();
    buf.push_str("# vtk DataFile Version 3.0\n");
    buf.push_str(title);
    buf.push('\n');
    buf.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(buf, "DIMENSIONS {} {} 1", nx + 1, ny + 1);
    buf.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(buf, "SPACING {} {} 1", fmt_f64(dx), fmt_f64(dy));
    let _ = writeln!(buf, "CELL_DATA {}", nx * ny);
    let _ = writeln!(buf, "SCALARS {name} double");
    buf.push_str("LOOKUP_TABLE default\n");
    for v in values {
        buf.push_str(&fmt_f64(*v));
        buf.push('\n');
    }
    fs::write(path, &buf)?;
    Ok(())
}

/// Node-centered variant used for corrector fields on the periodic node grid.
pub fn write_vtk_points(
    path: &Path,
    title: &str,
    name: &str,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    values: &[f64],
) -> Result<()> {
    let mut buf = String::new();
    buf.push_str("# vtk DataFile Version 3.0\n");
    buf.push_str(title);
    buf.push('\n');
    buf.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(buf, "DIMENSIONS {nx} {ny} 1");
    buf.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(buf, "SPACING {} {} 1", fmt_f64(dx), fmt_f64(dy));
    let _ = writeln!(buf, "POINT_DATA {}", nx * ny);
    let _ = writeln!(buf, "SCALARS {name} double");
    buf.push_str("LOOKUP_TABLE default\n");
    for v in values {
        buf.push_str(&fmt_f64(*v));
        buf.push('\n');
    }
    fs::write(path, &buf)?;
    Ok(())
}
