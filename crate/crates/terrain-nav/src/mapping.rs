//! Elevation map construction from depth measurements.
//!
//! Each cloud point is transformed into the world frame, binned to a grid
//! cell, pre-fused with the other points hitting the same cell this scan
//! (inverse-variance weighting), and folded into the cell with a scalar
//! Kalman update. Separately, [`fill_footprint`] seeds unknown cells under
//! the robot from its base plane so navigation can start before the sensor
//! has covered the ground the robot stands on.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::Pose;
use crate::grid::{ElevationGrid, GridError};

/// Default variance assigned to footprint-filled cells.
pub const FILL_VARIANCE: f64 = 0.02;

/// Points below the current cell estimate by more than this many standard
/// deviations are discarded as outliers.
const OUTLIER_SIGMA: f64 = 3.0;

/// A depth scan: points in the sensor frame plus the sensor's world pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub sensor_pose: Pose,
}

/// Per-measurement variance model: a base variance plus linear growth with
/// sensor range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementModel {
    pub base_variance: f64,
    pub range_coefficient: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        Self { base_variance: 0.0025, range_coefficient: 0.001 }
    }
}

impl MeasurementModel {
    pub fn variance_at_range(&self, range: f64) -> f64 {
        self.base_variance + self.range_coefficient * range
    }
}

/// Bookkeeping from one cloud integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub cells_updated: usize,
    pub skipped_non_finite: usize,
    pub out_of_bounds: usize,
    pub outliers_rejected: usize,
}

/// Fold a point cloud into the grid. Unknown cells adopt the fused
/// measurement directly; known cells update by the scalar Kalman rule
/// `z <- (v_m*z + v*z_m)/(v + v_m)`, `v <- v*v_m/(v + v_m)`.
pub fn integrate_cloud(
    grid: &mut ElevationGrid,
    cloud: &PointCloud,
    model: &MeasurementModel,
) -> IntegrationStats {
    let mut stats = IntegrationStats::default();
    // Pre-fusion accumulators per cell: sums of 1/v and z/v.
    let mut fused: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for p in &cloud.points {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            stats.skipped_non_finite += 1;
            continue;
        }
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let w = cloud.sensor_pose.transform(*p);
        let Some(cell) = grid.world_to_cell(w[0], w[1]) else {
            stats.out_of_bounds += 1;
            continue;
        };
        let v = model.variance_at_range(range).max(1e-9);
        let e = fused.entry(cell).or_insert((0.0, 0.0));
        e.0 += 1.0 / v;
        e.1 += w[2] / v;
    }

    let mut cells: Vec<_> = fused.into_iter().collect();
    cells.sort_unstable_by_key(|&((i, j), _)| (i, j));
    for ((i, j), (inv_v, z_over_v)) in cells {
        let z_m = z_over_v / inv_v;
        let v_m = 1.0 / inv_v;
        let cell = *grid.cell(i, j).unwrap();
        if cell.known {
            let gate = OUTLIER_SIGMA * (cell.variance + v_m).sqrt();
            if z_m < cell.height - gate {
                stats.outliers_rejected += 1;
                continue;
            }
            let denom = cell.variance + v_m;
            let z = (v_m * cell.height + cell.variance * z_m) / denom;
            let v = cell.variance * v_m / denom;
            grid.set_cell(i, j, z, v);
        } else {
            grid.set_cell(i, j, z_m, v_m);
        }
        stats.cells_updated += 1;
    }
    stats
}

/// Seed every unknown cell whose center lies within `radius` of the robot
/// with the height of the robot's base plane, extended along its current
/// roll/pitch. `clearance` is subtracted from the robot's z to reach the
/// ground contact plane. Known cells are never touched, so repeated calls
/// are idempotent.
pub fn fill_footprint(
    grid: &mut ElevationGrid,
    robot: &Pose,
    radius: f64,
    clearance: f64,
    fill_variance: f64,
) -> usize {
    assert!(radius > 0.0, "fill radius must be positive");
    let n = robot.plane_normal();
    // Degenerate (vertical) base planes fall back to a horizontal fill.
    let (a, b) = if n[2].abs() > 1e-6 { (-n[0] / n[2], -n[1] / n[2]) } else { (0.0, 0.0) };
    let z0 = robot.z - clearance;

    let eps = grid.resolution();
    let (ox, oy) = grid.origin();
    let r2 = radius * radius * (1.0 + 1e-9);
    let i_lo = (((robot.x - radius - ox) / eps).ceil().max(0.0)) as usize;
    let j_lo = (((robot.y - radius - oy) / eps).ceil().max(0.0)) as usize;
    let i_hi = ((robot.x + radius - ox) / eps).floor();
    let j_hi = ((robot.y + radius - oy) / eps).floor();
    if i_hi < 0.0 || j_hi < 0.0 {
        return 0;
    }
    let i_hi = (i_hi as usize).min(grid.rows().saturating_sub(1));
    let j_hi = (j_hi as usize).min(grid.cols().saturating_sub(1));

    let mut filled = 0;
    for i in i_lo..=i_hi {
        for j in j_lo..=j_hi {
            let (cx, cy) = grid.cell_to_world(i, j);
            let dx = cx - robot.x;
            let dy = cy - robot.y;
            if dx * dx + dy * dy > r2 || grid.is_known(i, j) {
                continue;
            }
            grid.set_cell(i, j, z0 + a * dx + b * dy, fill_variance);
            filled += 1;
        }
    }
    filled
}

const CLOUD_MAGIC: &[u8; 4] = b"PCLD";

/// Write a cloud in the "PCLD v1" layout: magic, u32 point count,
/// `N x (f32 x, y, z)`, then the sensor pose as six f64 values
/// (x, y, z, roll, pitch, yaw). Little-endian.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), GridError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CLOUD_MAGIC)?;
    w.write_all(&(cloud.points.len() as u32).to_le_bytes())?;
    for p in &cloud.points {
        for c in p {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    let pose = &cloud.sensor_pose;
    for v in [pose.x, pose.y, pose.z, pose.roll, pose.pitch, pose.yaw] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud, GridError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    load_cloud_from(&bytes)
}

pub fn load_cloud_from(bytes: &[u8]) -> Result<PointCloud, GridError> {
    let parse_err = |offset: usize, message: &str| GridError::Parse {
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < 8 {
        return Err(parse_err(0, "truncated header"));
    }
    if &bytes[0..4] != CLOUD_MAGIC {
        return Err(GridError::UnsupportedFormat);
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let need = 8 + n * 12 + 48;
    if bytes.len() < need {
        return Err(parse_err(bytes.len(), "truncated point data"));
    }
    let mut points = Vec::with_capacity(n);
    let mut off = 8;
    for _ in 0..n {
        let mut p = [0.0f64; 3];
        for c in &mut p {
            *c = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
            off += 4;
        }
        points.push(p);
    }
    let mut pose = [0.0f64; 6];
    for v in &mut pose {
        *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
    }
    Ok(PointCloud {
        points,
        sensor_pose: Pose::new(pose[0], pose[1], pose[2], pose[3], pose[4], pose[5]),
    })
}
