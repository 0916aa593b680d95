//! Binary and human-readable grid interchange.
//!
//! Binary format "EGRD v1", little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "EGRD"
//! version u16      1
//! origin  f64 x 2  world position of cell (0,0) center
//! resolution f64
//! rows    u32
//! cols    u32
//! cells   rows*cols records of (f32 height, f32 variance, u8 known), row-major
//! ```
//!
//! Heights and variances are stored as `f32`; grids whose cell values are
//! f32-representable (all generated maps are) round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{ElevationGrid, GridError};

const MAGIC: &[u8; 4] = b"EGRD";
const VERSION: u16 = 1;

pub fn save_grid(grid: &ElevationGrid, path: impl AsRef<Path>) -> Result<(), GridError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_grid_to(grid, &mut w)
}

pub fn save_grid_to(grid: &ElevationGrid, w: &mut impl Write) -> Result<(), GridError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let (ox, oy) = grid.origin();
    w.write_all(&ox.to_le_bytes())?;
    w.write_all(&oy.to_le_bytes())?;
    w.write_all(&grid.resolution().to_le_bytes())?;
    w.write_all(&(grid.rows() as u32).to_le_bytes())?;
    w.write_all(&(grid.cols() as u32).to_le_bytes())?;
    for c in grid.cells() {
        w.write_all(&(c.height as f32).to_le_bytes())?;
        w.write_all(&(c.variance as f32).to_le_bytes())?;
        w.write_all(&[c.known as u8])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<ElevationGrid, GridError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    load_grid_from(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], GridError> {
        if self.offset + n > self.bytes.len() {
            return Err(GridError::Parse {
                offset: self.offset as u64,
                message: format!("truncated file while reading {what}"),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn f64(&mut self, what: &str) -> Result<f64, GridError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32, GridError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, GridError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16, GridError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, GridError> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn load_grid_from(bytes: &[u8]) -> Result<ElevationGrid, GridError> {
    let mut c = Cursor { bytes, offset: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(GridError::UnsupportedFormat);
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(GridError::UnsupportedVersion(version));
    }
    let ox = c.f64("origin x")?;
    let oy = c.f64("origin y")?;
    let resolution = c.f64("resolution")?;
    let rows = c.u32("rows")? as usize;
    let cols = c.u32("cols")? as usize;
    if !(resolution > 0.0) || rows == 0 || cols == 0 {
        return Err(GridError::Parse {
            offset: c.offset as u64,
            message: format!("invalid header: resolution {resolution}, {rows}x{cols}"),
        });
    }
    let mut grid = ElevationGrid::new((ox, oy), resolution, rows, cols)?;
    for i in 0..rows {
        for j in 0..cols {
            let h = c.f32("cell height")?;
            let v = c.f32("cell variance")?;
            let known = c.u8("cell flag")?;
            if known != 0 {
                grid.set_cell(i, j, h as f64, v as f64);
            }
        }
    }
    Ok(grid)
}

/// Human-readable export: a JSON header next to a CSV of heights
/// (one row per `i`, `"nan"` for unknown cells).
pub fn export_csv(
    grid: &ElevationGrid,
    json_path: impl AsRef<Path>,
    csv_path: impl AsRef<Path>,
) -> Result<(), GridError> {
    let (ox, oy) = grid.origin();
    let header = serde_json::json!({
        "format": "EGRD-csv",
        "origin_x": ox,
        "origin_y": oy,
        "resolution": grid.resolution(),
        "rows": grid.rows(),
        "cols": grid.cols(),
    });
    std::fs::write(json_path, serde_json::to_string_pretty(&header).unwrap())?;
    let mut w = BufWriter::new(File::create(csv_path)?);
    for i in 0..grid.rows() {
        let mut line = String::new();
        for j in 0..grid.cols() {
            if j > 0 {
                line.push(',');
            }
            match grid.height(i, j) {
                Some(h) => line.push_str(&format!("{h}")),
                None => line.push_str("nan"),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_map, MapSpec};

    #[test]
    fn round_trip_preserves_generated_map() {
        let g = generate_map(&MapSpec::cone(), 0.1).unwrap();
        let mut buf = Vec::new();
        save_grid_to(&g, &mut buf).unwrap();
        let back = load_grid_from(&buf).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn round_trip_preserves_unknown_cells() {
        let mut g = ElevationGrid::new((1.0, -2.0), 0.5, 4, 3).unwrap();
        g.set_cell(0, 0, 0.25, 0.125);
        g.set_cell(3, 2, -1.5, 0.5);
        let mut buf = Vec::new();
        save_grid_to(&g, &mut buf).unwrap();
        let back = load_grid_from(&buf).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let g = generate_map(&MapSpec::Flat { width: 1.0, height: 1.0 }, 0.5).unwrap();
        let mut buf = Vec::new();
        save_grid_to(&g, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        match load_grid_from(&buf) {
            Err(GridError::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_unsupported_format() {
        let mut buf = Vec::new();
        let g = generate_map(&MapSpec::Flat { width: 1.0, height: 1.0 }, 0.5).unwrap();
        save_grid_to(&g, &mut buf).unwrap();
        buf[0..4].copy_from_slice(b"NOPE");
        assert!(matches!(load_grid_from(&buf), Err(GridError::UnsupportedFormat)));
    }

    #[test]
    fn future_version_is_rejected() {
        let g = generate_map(&MapSpec::Flat { width: 1.0, height: 1.0 }, 0.5).unwrap();
        let mut buf = Vec::new();
        save_grid_to(&g, &mut buf).unwrap();
        buf[4] = 9;
        assert!(matches!(load_grid_from(&buf), Err(GridError::UnsupportedVersion(9))));
    }

    #[test]
    fn csv_export_writes_nan_for_unknown() {
        let dir = std::env::temp_dir().join("terrain_nav_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut g = ElevationGrid::new((0.0, 0.0), 1.0, 2, 2).unwrap();
        g.set_cell(0, 0, 1.5, 0.0);
        let json = dir.join("g.json");
        let csv = dir.join("g.csv");
        export_csv(&g, &json, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("1.5,nan"));
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(header["rows"], 2);
    }
}
