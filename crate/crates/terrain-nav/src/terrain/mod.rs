//! Terrain analysis shared by the planner and the local controller:
//! per-cell traversability probabilities, the blocked/inflated masks and the
//! obstacle distance field derived from them, and the footprint geometry
//! primitives (least-squares plane fit, slope angle, roughness).

mod edt;

pub use edt::edt_squared;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ElevationGrid;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TerrainError {
    /// Fewer than three known cells under a footprint.
    #[error("insufficient footprint support ({found} known cells, need 3)")]
    InsufficientSupport { found: usize },
    /// Normal matrix is rank deficient (xy-collinear points).
    #[error("degenerate plane fit")]
    DegenerateFit,
}

/// Parameters of the height-difference traversability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversabilityConfig {
    /// Stencil offset in cells.
    pub delta: usize,
    /// Decay coefficient of p = exp(-lambda * S).
    pub lambda: f64,
    /// Cells with p <= threshold are blocked.
    pub threshold: f64,
    /// Obstacle dilation radius in meters.
    pub inflation_radius: f64,
    /// Treat unknown cells as untraversable.
    pub unknown_is_blocked: bool,
}

impl Default for TraversabilityConfig {
    fn default() -> Self {
        // lambda chosen so that a 0.59 rad ramp and bricks >= 8 cm block at
        // the default 5 cm resolution while 0.1-0.12 rad ramps and the
        // shallow pits stay traversable.
        Self {
            delta: 2,
            lambda: 4.0,
            threshold: 0.5,
            inflation_radius: 0.25,
            unknown_is_blocked: true,
        }
    }
}

impl TraversabilityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.delta < 1 {
            return Err("delta must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return Err("lambda must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err("threshold must lie in (0, 1)".into());
        }
        if self.inflation_radius < 0.0 {
            return Err("inflation radius cannot be negative".into());
        }
        Ok(())
    }
}

/// Traversability probability of cell `(i, j)`: the mean absolute height
/// difference over a `delta`-cell stencil along each axis, mapped through
/// `exp(-lambda * S)`. Stencil offsets are clamped at the grid edge (the
/// divisor uses the actual clamped span). Unknown stencil cells yield 0 when
/// `unknown_is_blocked`, otherwise they borrow the center height.
pub fn traversability_prob(
    grid: &ElevationGrid,
    i: usize,
    j: usize,
    config: &TraversabilityConfig,
) -> f64 {
    let d = config.delta;
    let rows = grid.rows();
    let cols = grid.cols();
    let ip = (i + d).min(rows - 1);
    let im = i.saturating_sub(d);
    let jp = (j + d).min(cols - 1);
    let jm = j.saturating_sub(d);

    let center = grid.height(i, j);
    let resolve = |h: Option<f64>| -> Option<f64> {
        match h {
            Some(z) => Some(z),
            None if config.unknown_is_blocked => None,
            // Borrow the center height; if that is unknown too the
            // difference collapses to zero below.
            None => Some(center.unwrap_or(0.0)),
        }
    };
    let axis = |plus: Option<f64>, minus: Option<f64>, span_cells: usize| -> Option<f64> {
        if span_cells == 0 {
            return Some(0.0);
        }
        let (zp, zm) = match (resolve(plus), resolve(minus)) {
            (Some(a), Some(b)) => (a, b),
            _ => return None,
        };
        Some((zp - zm).abs() / (span_cells as f64 * grid.resolution()))
    };

    let s_v = axis(grid.height(ip, j), grid.height(im, j), ip - im);
    let s_h = axis(grid.height(i, jp), grid.height(i, jm), jp - jm);
    match (s_h, s_v) {
        (Some(sh), Some(sv)) => {
            let s = 0.5 * (sh + sv);
            (-config.lambda * s).exp()
        }
        _ => 0.0,
    }
}

/// Derived traversability layers over the same lattice as the source grid.
#[derive(Debug, Clone)]
pub struct TraversabilityGrid {
    origin: (f64, f64),
    resolution: f64,
    rows: usize,
    cols: usize,
    probability: Vec<f64>,
    blocked: Vec<bool>,
    inflated: Vec<bool>,
    /// Meters to the nearest inflated-blocked cell center; capped at the
    /// grid diagonal when no cell is blocked.
    distance: Vec<f64>,
}

impl TraversabilityGrid {
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
        self.origin
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    #[inline]
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.probability[self.index(i, j)]
    }

    #[inline]
    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[self.index(i, j)]
    }

    #[inline]
    pub fn is_inflated(&self, i: usize, j: usize) -> bool {
        self.inflated[self.index(i, j)]
    }

    /// Distance (meters) from cell center to the nearest inflated cell.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[self.index(i, j)]
    }

    pub fn blocked_mask(&self) -> &[bool] {
        &self.blocked
    }

    pub fn inflated_mask(&self) -> &[bool] {
        &self.inflated
    }

    #[inline]
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin.0 + 0.5 * self.resolution) / self.resolution).floor();
        let j = ((y - self.origin.1 + 0.5 * self.resolution) / self.resolution).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.rows && (j as usize) < self.cols {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    pub fn cell_to_world(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + i as f64 * self.resolution,
            self.origin.1 + j as f64 * self.resolution,
        )
    }

    /// Obstacle clearance at a world point; `None` outside the grid.
    #[inline]
    pub fn distance_at(&self, x: f64, y: f64) -> Option<f64> {
        self.world_to_cell(x, y).map(|(i, j)| self.distance(i, j))
    }

    pub fn is_blocked_at(&self, x: f64, y: f64) -> Option<bool> {
        self.world_to_cell(x, y).map(|(i, j)| self.is_blocked(i, j))
    }

    pub fn is_inflated_at(&self, x: f64, y: f64) -> Option<bool> {
        self.world_to_cell(x, y).map(|(i, j)| self.is_inflated(i, j))
    }

    /// Write the probability layer as a binary PGM image (p * 255, `i` rows).
    pub fn export_pgm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        for i in 0..self.rows {
            let row: Vec<u8> = (0..self.cols)
                .map(|j| (self.probability(i, j) * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            w.write_all(&row)?;
        }
        w.flush()
    }

    /// Write the blocked and inflated masks as 0/1 CSV files.
    pub fn export_masks_csv(
        &self,
        blocked_path: impl AsRef<Path>,
        inflated_path: impl AsRef<Path>,
    ) -> std::io::Result<()> {
        for (mask, path) in [(&self.blocked, blocked_path.as_ref()), (&self.inflated, inflated_path.as_ref())] {
            let mut w = BufWriter::new(File::create(path)?);
            for i in 0..self.rows {
                let line: Vec<&str> =
                    (0..self.cols).map(|j| if mask[i * self.cols + j] { "1" } else { "0" }).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Build all traversability layers for a grid: per-cell probability, the
/// blocked mask (p <= threshold, plus unknown cells when configured), the
/// inflated mask (blocked dilated by a disk), and the exact Euclidean
/// distance field of the inflated mask.
pub fn build_traversability(
    grid: &ElevationGrid,
    config: &TraversabilityConfig,
) -> TraversabilityGrid {
    let rows = grid.rows();
    let cols = grid.cols();
    let eps = grid.resolution();
    let mut probability = vec![0.0; rows * cols];
    let mut blocked = vec![false; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let p = traversability_prob(grid, i, j, config);
            probability[i * cols + j] = p;
            blocked[i * cols + j] =
                p <= config.threshold || (config.unknown_is_blocked && !grid.is_known(i, j));
        }
    }

    let diag = ((rows as f64 * eps).powi(2) + (cols as f64 * eps).powi(2)).sqrt();
    let any_blocked = blocked.iter().any(|&b| b);
    let (inflated, distance) = if any_blocked {
        let d2_blocked = edt_squared(&blocked, rows, cols);
        let r_cells = config.inflation_radius / eps;
        let r2 = r_cells * r_cells;
        let inflated: Vec<bool> = d2_blocked.iter().map(|&d2| d2 <= r2).collect();
        let d2_inflated = edt_squared(&inflated, rows, cols);
        let distance: Vec<f64> =
            d2_inflated.iter().map(|&d2| (d2.sqrt() * eps).min(diag)).collect();
        (inflated, distance)
    } else {
        (vec![false; rows * cols], vec![diag; rows * cols])
    };

    TraversabilityGrid {
        origin: grid.origin(),
        resolution: eps,
        rows,
        cols,
        probability,
        blocked,
        inflated,
        distance,
    }
}

/// Least-squares plane `a*x + b*y + c = z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub point_count: usize,
}

impl PlaneFit {
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

/// All known cells whose centers lie within `r` of `(x, y)`, as world points.
pub fn footprint_cells(
    grid: &ElevationGrid,
    x: f64,
    y: f64,
    r: f64,
) -> Result<Vec<[f64; 3]>, TerrainError> {
    assert!(r > 0.0, "footprint radius must be positive");
    let mut points = Vec::new();
    visit_footprint(grid, x, y, r, |px, py, pz| points.push([px, py, pz]));
    if points.len() < 3 {
        return Err(TerrainError::InsufficientSupport { found: points.len() });
    }
    Ok(points)
}

#[inline]
fn visit_footprint(
    grid: &ElevationGrid,
    x: f64,
    y: f64,
    r: f64,
    mut visit: impl FnMut(f64, f64, f64),
) {
    let eps = grid.resolution();
    let (ox, oy) = grid.origin();
    // Tiny relative slack so cells whose centers sit exactly on the radius
    // survive coordinate rounding. Row/column bounds are padded by one cell
    // and the per-cell test decides inclusion.
    let r2 = r * r * (1.0 + 1e-9);
    let rows = grid.rows();
    let cols = grid.cols();
    let cells = grid.cells();
    let i_lo = (((x - r - ox) / eps).floor() as isize - 1).max(0);
    let i_hi = ((x + r - ox) / eps).ceil() as isize + 1;
    if i_hi < 0 || i_lo >= rows as isize {
        return;
    }
    let i_hi = (i_hi as usize).min(rows - 1);
    for i in i_lo as usize..=i_hi {
        let cx = ox + i as f64 * eps;
        let dx = cx - x;
        let rem = r2 - dx * dx;
        if rem < 0.0 {
            continue;
        }
        let half = rem.sqrt();
        let j_lo = (((y - half - oy) / eps).floor() as isize - 1).max(0);
        let j_hi = ((y + half - oy) / eps).ceil() as isize + 1;
        if j_hi < 0 || j_lo >= cols as isize {
            continue;
        }
        let j_hi = (j_hi as usize).min(cols - 1);
        let row = &cells[i * cols..i * cols + cols];
        for j in j_lo as usize..=j_hi {
            let cy = oy + j as f64 * eps;
            let dy = cy - y;
            if dy * dy > rem {
                continue;
            }
            let c = &row[j];
            if c.known {
                visit(cx, cy, c.height);
            }
        }
    }
}

/// Least-squares fit of `a*x + b*y + c = z` through the 3x3 normal
/// equations (solved on centroid-centered coordinates for conditioning).
pub fn fit_plane(points: &[[f64; 3]]) -> Result<PlaneFit, TerrainError> {
    if points.len() < 3 {
        return Err(TerrainError::DegenerateFit);
    }
    let n = points.len() as f64;
    let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
    for p in points {
        mx += p[0];
        my += p[1];
        mz += p[2];
    }
    mx /= n;
    my /= n;
    mz /= n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let dx = p[0] - mx;
        let dy = p[1] - my;
        let dz = p[2] - mz;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    solve_centered(sxx, sxy, syy, sxz, syz, mx, my, mz, points.len())
}

#[allow(clippy::too_many_arguments)]
fn solve_centered(
    sxx: f64,
    sxy: f64,
    syy: f64,
    sxz: f64,
    syz: f64,
    mx: f64,
    my: f64,
    mz: f64,
    count: usize,
) -> Result<PlaneFit, TerrainError> {
    let det = sxx * syy - sxy * sxy;
    if det <= 1e-12 * sxx * syy || !(det > 0.0) {
        return Err(TerrainError::DegenerateFit);
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    let c = mz - a * mx - b * my;
    Ok(PlaneFit { a, b, c, point_count: count })
}

/// Footprint gather and plane fit fused into one pass over the cell block,
/// with the roughness estimate recovered from the same sums through the
/// least-squares residual identity `SS_res = Szz - a*Sxz - b*Syz`. This is
/// the hot path of rollout posing; it matches
/// `fit_plane(footprint_cells(..))` to accumulation precision.
pub fn footprint_plane(
    grid: &ElevationGrid,
    x: f64,
    y: f64,
    r: f64,
    with_roughness: bool,
) -> Result<(PlaneFit, Option<f64>), TerrainError> {
    let mut count = 0usize;
    let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut sxz, mut syz, mut szz) = (0.0, 0.0, 0.0);
    // Accumulate on coordinates relative to (x, y) for conditioning.
    visit_footprint(grid, x, y, r, |px, py, pz| {
        let dx = px - x;
        let dy = py - y;
        count += 1;
        sx += dx;
        sy += dy;
        sz += pz;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * pz;
        syz += dy * pz;
        szz += pz * pz;
    });
    if count < 3 {
        return Err(TerrainError::InsufficientSupport { found: count });
    }
    let n = count as f64;
    let (mx, my, mz) = (sx / n, sy / n, sz / n);
    let cxx = sxx - n * mx * mx;
    let cxy = sxy - n * mx * my;
    let cyy = syy - n * my * my;
    let cxz = sxz - n * mx * mz;
    let cyz = syz - n * my * mz;
    let fit = solve_centered(cxx, cxy, cyy, cxz, cyz, mx, my, mz, count)?;
    // Shift the offset back to world coordinates.
    let world_fit = PlaneFit { c: fit.c - fit.a * x - fit.b * y, ..fit };
    let sigma = with_roughness.then(|| {
        let czz = szz - n * mz * mz;
        let ss_res = (czz - fit.a * cxz - fit.b * cyz).max(0.0);
        let norm2 = fit.a * fit.a + fit.b * fit.b + 1.0;
        (ss_res / (n * norm2)).sqrt()
    });
    Ok((world_fit, sigma))
}

/// Acute angle between the fitted plane and horizontal:
/// `arccos(1 / sqrt(a^2 + b^2 + 1))`, always in `[0, pi/2)`.
pub fn slope_angle(fit: &PlaneFit) -> f64 {
    (1.0 / (fit.a * fit.a + fit.b * fit.b + 1.0).sqrt()).clamp(-1.0, 1.0).acos()
}

/// RMS perpendicular distance of the points from the fitted plane.
pub fn roughness(points: &[[f64; 3]], fit: &PlaneFit) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let norm2 = fit.a * fit.a + fit.b * fit.b + 1.0;
    let ss: f64 = points
        .iter()
        .map(|p| {
            let res = fit.a * p[0] + fit.b * p[1] + fit.c - p[2];
            res * res
        })
        .sum();
    (ss / (points.len() as f64 * norm2)).sqrt()
}

/// Pose a body on the fitted plane: height at `(x, y)` plus the roll/pitch
/// that align the body's base with the plane at the given heading. Pitch is
/// negative when climbing (Z-Y-X convention with y to the left), roll
/// positive when the terrain rises to the left.
pub fn pose_on_plane(fit: &PlaneFit, x: f64, y: f64, yaw: f64) -> (f64, f64, f64) {
    let z = fit.height_at(x, y);
    let (sy, cy) = yaw.sin_cos();
    let grade_forward = fit.a * cy + fit.b * sy;
    let grade_left = -fit.a * sy + fit.b * cy;
    (z, grade_left.atan(), (-grade_forward).atan())
}
