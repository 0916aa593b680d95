//! 2.5D elevation grid: a regular lattice of height/variance cells.
//!
//! Indexing convention: cell `(i, j)` has its center at
//! `origin + (i * resolution, j * resolution)`, so `i` runs along the world
//! x-axis and `j` along the world y-axis. Cells are stored row-major with
//! `i` as the row index (`index = i * cols + j`). A world point belongs to
//! the cell whose center is nearest, i.e. cell boundaries sit halfway
//! between centers.

mod generators;
mod io;

pub use generators::{
    generate_map, BrickSpec, ConeParams, CourseParams, MapSpec, PitsParams, RampParams,
};
pub use io::{load_grid, load_grid_from, save_grid, save_grid_to, export_csv};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("unsupported format (bad magic bytes)")]
    UnsupportedFormat,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
}

/// One grid cell. `known == false` means the cell has never been observed;
/// its height and variance are meaningless and never exposed by queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellData {
    pub height: f64,
    pub variance: f64,
    pub known: bool,
}

impl CellData {
    pub const UNKNOWN: CellData = CellData { height: 0.0, variance: 0.0, known: false };
}

/// Result of a continuous height lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeightQuery {
    Known(f64),
    Unknown,
}

impl HeightQuery {
    pub fn value(self) -> Option<f64> {
        match self {
            HeightQuery::Known(z) => Some(z),
            HeightQuery::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElevationGrid {
    origin_x: f64,
    origin_y: f64,
    resolution: f64,
    rows: usize,
    cols: usize,
    cells: Vec<CellData>,
}

impl ElevationGrid {
    /// Create a grid of fully unknown cells. `origin_xy` is the world
    /// position of the center of cell (0, 0).
    pub fn new(
        origin_xy: (f64, f64),
        resolution: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::InvalidArgument(format!(
                "resolution must be positive and finite, got {resolution}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(GridError::InvalidArgument(format!(
                "grid dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            origin_x: origin_xy.0,
            origin_y: origin_xy.1,
            resolution,
            rows,
            cols,
            cells: vec![CellData::UNKNOWN; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    /// World coordinates of the center of cell `(i, j)`.
    #[inline]
    pub fn cell_to_world(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin_x + i as f64 * self.resolution,
            self.origin_y + j as f64 * self.resolution,
        )
    }

    /// Cell containing the world point, or `None` if outside the grid.
    /// The cell extends half a resolution on each side of its center.
    #[inline]
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin_x + 0.5 * self.resolution) / self.resolution).floor();
        let j = ((y - self.origin_y + 0.5 * self.resolution) / self.resolution).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.rows && (j as usize) < self.cols {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    #[inline]
    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        self.world_to_cell(x, y).is_some()
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> Option<&CellData> {
        if i < self.rows && j < self.cols {
            Some(&self.cells[self.index(i, j)])
        } else {
            None
        }
    }

    /// Height of cell `(i, j)` if it is in bounds and known.
    #[inline]
    pub fn height(&self, i: usize, j: usize) -> Option<f64> {
        self.cell(i, j).filter(|c| c.known).map(|c| c.height)
    }

    #[inline]
    pub fn is_known(&self, i: usize, j: usize) -> bool {
        self.cell(i, j).is_some_and(|c| c.known)
    }

    /// Set a cell to a known height/variance pair.
    pub fn set_cell(&mut self, i: usize, j: usize, height: f64, variance: f64) {
        assert!(i < self.rows && j < self.cols, "cell ({i},{j}) out of bounds");
        let idx = self.index(i, j);
        self.cells[idx] = CellData { height, variance, known: true };
    }

    pub fn set_unknown(&mut self, i: usize, j: usize) {
        assert!(i < self.rows && j < self.cols, "cell ({i},{j}) out of bounds");
        let idx = self.index(i, j);
        self.cells[idx] = CellData::UNKNOWN;
    }

    pub fn cells(&self) -> &[CellData] {
        &self.cells
    }

    /// Continuous height lookup. Bilinear interpolation over the four
    /// surrounding cell centers when all four are known; the nearest known
    /// of the four when one to three are known; `Unknown` otherwise or when
    /// the point is outside the grid. Within the half-cell margin between
    /// the outermost centers and the grid edge the stencil is clamped, which
    /// degenerates to the edge value.
    pub fn height_at(&self, x: f64, y: f64) -> HeightQuery {
        if !self.in_bounds(x, y) {
            return HeightQuery::Unknown;
        }
        let u = (x - self.origin_x) / self.resolution;
        let v = (y - self.origin_y) / self.resolution;
        let i0 = (u.floor() as isize).clamp(0, self.rows as isize - 1) as usize;
        let j0 = (v.floor() as isize).clamp(0, self.cols as isize - 1) as usize;
        let i0 = i0.min(self.rows.saturating_sub(2));
        let j0 = j0.min(self.cols.saturating_sub(2));
        let i1 = (i0 + 1).min(self.rows - 1);
        let j1 = (j0 + 1).min(self.cols - 1);
        let tx = (u - i0 as f64).clamp(0.0, 1.0);
        let ty = (v - j0 as f64).clamp(0.0, 1.0);

        let corners = [(i0, j0), (i1, j0), (i0, j1), (i1, j1)];
        let heights = [
            self.height(i0, j0),
            self.height(i1, j0),
            self.height(i0, j1),
            self.height(i1, j1),
        ];
        match heights.iter().filter(|h| h.is_some()).count() {
            4 => {
                let z00 = heights[0].unwrap();
                let z10 = heights[1].unwrap();
                let z01 = heights[2].unwrap();
                let z11 = heights[3].unwrap();
                let z0 = z00 + (z10 - z00) * tx;
                let z1 = z01 + (z11 - z01) * tx;
                HeightQuery::Known(z0 + (z1 - z0) * ty)
            }
            0 => HeightQuery::Unknown,
            _ => {
                // Partial stencil: fall back to the nearest known center.
                let mut best: Option<(f64, f64)> = None;
                for (idx, cell) in corners.iter().enumerate() {
                    if let Some(z) = heights[idx] {
                        let (cx, cy) = self.cell_to_world(cell.0, cell.1);
                        let d2 = crate::geom::dist2((x, y), (cx, cy));
                        if best.is_none_or(|(bd, _)| d2 < bd) {
                            best = Some((d2, z));
                        }
                    }
                }
                HeightQuery::Known(best.unwrap().1)
            }
        }
    }

    /// Minimum and maximum known heights, if any cell is known.
    pub fn height_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for c in &self.cells {
            if c.known {
                let (lo, hi) = range.unwrap_or((c.height, c.height));
                range = Some((lo.min(c.height), hi.max(c.height)));
            }
        }
        range
    }

    /// Fraction of cells that are known.
    pub fn known_fraction(&self) -> f64 {
        let known = self.cells.iter().filter(|c| c.known).count();
        known as f64 / self.cells.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn create_grid_all_unknown() {
        let g = ElevationGrid::new((0.0, 0.0), 0.1, 10, 10).unwrap();
        assert_eq!(g.cell_count(), 100);
        assert!(g.cells().iter().all(|c| !c.known));
    }

    #[test]
    fn create_grid_covers_requested_extent() {
        let g = ElevationGrid::new((-5.0, -5.0), 0.05, 200, 200).unwrap();
        assert!(g.world_to_cell(-5.0, -5.0).is_some());
        assert!(g.world_to_cell(4.9, 4.9).is_some());
    }

    #[test]
    fn create_grid_rejects_bad_arguments() {
        assert!(matches!(
            ElevationGrid::new((0.0, 0.0), 0.0, 10, 10),
            Err(GridError::InvalidArgument(_))
        ));
        assert!(matches!(
            ElevationGrid::new((0.0, 0.0), 0.1, 0, 10),
            Err(GridError::InvalidArgument(_))
        ));
    }

    #[test]
    fn world_to_cell_floor_convention() {
        let g = ElevationGrid::new((0.0, 0.0), 0.1, 100, 100).unwrap();
        assert_eq!(g.world_to_cell(0.0, 0.0), Some((0, 0)));
        assert_eq!(g.world_to_cell(1.0, 2.0), Some((10, 20)));
        // Slightly under the halfway boundary stays in the lower cell.
        assert_eq!(g.world_to_cell(0.049, 0.0), Some((0, 0)));
        assert_eq!(g.world_to_cell(0.051, 0.0), Some((1, 0)));
    }

    #[test]
    fn world_to_cell_out_of_bounds() {
        let g = ElevationGrid::new((0.0, 0.0), 0.1, 10, 10).unwrap();
        assert_eq!(g.world_to_cell(5.0, 0.0), None);
        assert_eq!(g.world_to_cell(-1.0, 0.0), None);
        assert_eq!(g.world_to_cell(0.0, 5.0), None);
    }

    #[test]
    fn cell_world_round_trip_on_centers() {
        let g = ElevationGrid::new((-2.0, 3.0), 0.25, 17, 13).unwrap();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let (x, y) = g.cell_to_world(i, j);
                assert_eq!(g.world_to_cell(x, y), Some((i, j)));
            }
        }
    }

    #[test]
    fn height_at_constant_field() {
        let mut g = ElevationGrid::new((0.0, 0.0), 0.1, 10, 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                g.set_cell(i, j, 0.3, 0.0);
            }
        }
        assert_eq!(g.height_at(0.42, 0.57), HeightQuery::Known(0.3));
        assert_eq!(g.height_at(0.0, 0.0), HeightQuery::Known(0.3));
    }

    #[test]
    fn height_at_bilinear_patch_center() {
        // Two rows at z=0, two rows at z=1: the patch center interpolates to 0.5.
        let mut g = ElevationGrid::new((0.0, 0.0), 1.0, 2, 2).unwrap();
        g.set_cell(0, 0, 0.0, 0.0);
        g.set_cell(0, 1, 0.0, 0.0);
        g.set_cell(1, 0, 1.0, 0.0);
        g.set_cell(1, 1, 1.0, 0.0);
        let q = g.height_at(0.5, 0.5);
        assert_relative_eq!(q.value().unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn height_at_unknown_region() {
        let g = ElevationGrid::new((0.0, 0.0), 0.1, 10, 10).unwrap();
        assert_eq!(g.height_at(0.5, 0.5), HeightQuery::Unknown);
        assert_eq!(g.height_at(100.0, 0.5), HeightQuery::Unknown);
    }

    #[test]
    fn height_at_partial_stencil_uses_nearest_known() {
        let mut g = ElevationGrid::new((0.0, 0.0), 1.0, 2, 2).unwrap();
        g.set_cell(0, 0, 2.0, 0.0);
        g.set_cell(1, 1, 7.0, 0.0);
        // Query near (0,0)'s center.
        assert_eq!(g.height_at(0.1, 0.2), HeightQuery::Known(2.0));
        // Query near (1,1)'s center.
        assert_eq!(g.height_at(0.9, 0.8), HeightQuery::Known(7.0));
    }

    #[test]
    fn bilinear_reproduces_affine_plane() {
        let (p, q, c) = (0.13, -0.27, 0.45);
        let mut g = ElevationGrid::new((-1.0, -1.0), 0.1, 30, 30).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let (x, y) = g.cell_to_world(i, j);
                g.set_cell(i, j, p * x + q * y + c, 0.0);
            }
        }
        // Sample strictly inside the hull of cell centers.
        for k in 0..200 {
            let t = k as f64 / 199.0;
            let x = -0.95 + t * 2.7;
            let y = 1.85 - t * 2.7;
            let expect = p * x + q * y + c;
            let got = g.height_at(x, y).value().unwrap();
            assert!((got - expect).abs() < 1e-9, "at ({x},{y}): {got} vs {expect}");
        }
    }
}
