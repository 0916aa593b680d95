//! Procedural generators for the experiment terrains.
//!
//! Each generator evaluates an analytic height function at every cell center
//! and produces a fully known grid with zero variance. Heights are quantized
//! through `f32` so that generated maps survive the binary interchange
//! format without loss. Generation is deterministic: the same spec and
//! resolution always yield an identical grid.

use serde::{Deserialize, Serialize};

use super::{ElevationGrid, GridError};

/// A rectangular brick lying on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrickSpec {
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub height: f64,
}

impl BrickSpec {
    pub fn rect(&self) -> (f64, f64, f64, f64) {
        (
            self.center.0 - 0.5 * self.size.0,
            self.center.1 - 0.5 * self.size.1,
            self.center.0 + 0.5 * self.size.0,
            self.center.1 + 0.5 * self.size.1,
        )
    }
}

/// Square plane with a truncated cone in the middle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConeParams {
    /// Plane extent along x and y, centered on the cone axis.
    pub plane_size: (f64, f64),
    pub base_radius: f64,
    pub top_radius: f64,
    pub cone_height: f64,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            plane_size: (10.0, 10.0),
            base_radius: 3.5,
            top_radius: 1.5,
            cone_height: 2.5,
        }
    }
}

/// Two flat surfaces at different heights joined by a ramp of limited
/// width. The lower surface spans `x in [0, lower_length]`, the upper
/// surface the final `upper_length` of the map, and the centered ramp band
/// climbs linearly between them. Beside the ramp band there is no surface
/// at all: those cells stay unknown, leaving the ramp as the only
/// connection between the levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RampParams {
    pub lower_length: f64,
    pub upper_length: f64,
    pub width: f64,
    pub step_height: f64,
    pub ramp_length: f64,
    pub ramp_width: f64,
}

impl Default for RampParams {
    fn default() -> Self {
        // ramp_length 5.0 at step 0.5 gives a slope of atan(0.1) ~ 0.0997 rad.
        Self {
            lower_length: 7.0,
            upper_length: 5.0,
            width: 8.0,
            step_height: 0.5,
            ramp_length: 5.0,
            ramp_width: 4.0,
        }
    }
}

impl RampParams {
    pub fn total_length(&self) -> f64 {
        self.lower_length + self.ramp_length + self.upper_length
    }

    /// y-range of the ramp band (centered across the map width).
    pub fn ramp_band(&self) -> (f64, f64) {
        let lo = 0.5 * (self.width - self.ramp_width);
        (lo, lo + self.ramp_width)
    }
}

/// Rectangular plane with two shallow rectangular pits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitsParams {
    pub length: f64,
    pub width: f64,
    pub pit_size: (f64, f64),
    pub pit_depth: f64,
    /// Centers chosen so the two pits jointly span most of the map width,
    /// forcing paths between opposite ends to weave around them.
    pub pit_centers: Vec<(f64, f64)>,
}

impl Default for PitsParams {
    fn default() -> Self {
        Self {
            length: 12.0,
            width: 5.0,
            pit_size: (0.5, 2.5),
            pit_depth: 0.05,
            pit_centers: vec![(5.0, 2.0), (7.0, 3.0)],
        }
    }
}

impl PitsParams {
    pub fn pit_rects(&self) -> Vec<(f64, f64, f64, f64)> {
        self.pit_centers
            .iter()
            .map(|&(cx, cy)| {
                (
                    cx - 0.5 * self.pit_size.0,
                    cy - 0.5 * self.pit_size.1,
                    cx + 0.5 * self.pit_size.0,
                    cy + 0.5 * self.pit_size.1,
                )
            })
            .collect()
    }
}

/// Obstacle-course world: a raised platform reachable by a low-grade ramp on
/// its west end and a steep ramp on its east end, a shallow pit and a small
/// ledge on the platform, and bricks scattered on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourseParams {
    /// Ground extent (x0, y0, x1, y1).
    pub ground: (f64, f64, f64, f64),
    /// Platform rectangle (x0, y0, x1, y1).
    pub platform: (f64, f64, f64, f64),
    pub platform_height: f64,
    pub low_ramp_slope: f64,
    pub steep_ramp_slope: f64,
    pub pit_center: (f64, f64),
    pub pit_size: (f64, f64),
    pub pit_depth: f64,
    pub ledge_center: (f64, f64),
    pub ledge_size: (f64, f64),
    pub ledge_height: f64,
    pub bricks: Vec<BrickSpec>,
}

impl Default for CourseParams {
    fn default() -> Self {
        Self {
            ground: (-6.0, -3.0, 4.0, 3.0),
            platform: (-1.5, 0.5, 1.5, 1.5),
            platform_height: 0.4,
            low_ramp_slope: 0.12,
            steep_ramp_slope: 0.59,
            pit_center: (0.5, 1.0),
            pit_size: (0.3, 0.3),
            pit_depth: 0.025,
            ledge_center: (-0.5, 1.0),
            ledge_size: (0.03, 0.20),
            ledge_height: 0.015,
            bricks: vec![
                BrickSpec { center: (-3.95, -0.5), size: (0.4, 0.4), height: 0.14 },
                BrickSpec { center: (-1.9, -1.5), size: (0.4, 0.4), height: 0.27 },
                BrickSpec { center: (0.4, -1.3), size: (0.4, 0.4), height: 0.21 },
                BrickSpec { center: (-2.0, 0.08), size: (0.4, 0.4), height: 0.08 },
            ],
        }
    }
}

impl CourseParams {
    /// Horizontal run of the low ramp.
    pub fn low_ramp_run(&self) -> f64 {
        self.platform_height / self.low_ramp_slope.tan()
    }

    /// Horizontal run of the steep ramp.
    pub fn steep_ramp_run(&self) -> f64 {
        self.platform_height / self.steep_ramp_slope.tan()
    }

    /// The low ramp climbs eastward to the platform's west edge.
    pub fn low_ramp_rect(&self) -> (f64, f64, f64, f64) {
        let (px0, py0, _, py1) = self.platform;
        (px0 - self.low_ramp_run(), py0, px0, py1)
    }

    /// The steep ramp climbs westward to the platform's east edge.
    pub fn steep_ramp_rect(&self) -> (f64, f64, f64, f64) {
        let (_, py0, px1, py1) = self.platform;
        (px1, py0, px1 + self.steep_ramp_run(), py1)
    }

    pub fn pit_rect(&self) -> (f64, f64, f64, f64) {
        (
            self.pit_center.0 - 0.5 * self.pit_size.0,
            self.pit_center.1 - 0.5 * self.pit_size.1,
            self.pit_center.0 + 0.5 * self.pit_size.0,
            self.pit_center.1 + 0.5 * self.pit_size.1,
        )
    }

    pub fn ledge_rect(&self) -> (f64, f64, f64, f64) {
        (
            self.ledge_center.0 - 0.5 * self.ledge_size.0,
            self.ledge_center.1 - 0.5 * self.ledge_size.1,
            self.ledge_center.0 + 0.5 * self.ledge_size.0,
            self.ledge_center.1 + 0.5 * self.ledge_size.1,
        )
    }

    /// The reference tour used by the integration episode: up the low ramp,
    /// across the platform through the ledge and the pit, turn around just
    /// short of the steep ramp, back down the low ramp, then a ground loop
    /// whose segments cross the bricks before returning to the start.
    pub fn default_route(&self) -> Vec<(f64, f64)> {
        vec![
            (-5.2, 1.0),
            (-3.0, 1.0),
            (0.0, 1.0),
            (0.85, 1.0),
            (-1.8, 1.0),
            (-4.9, 0.4),
            (-3.0, -1.4),
            (-0.8, -1.6),
            (1.3, -1.0),
            (0.0, -0.5),
            (-5.2, 1.0),
        ]
    }
}

/// Tagged union of the supported procedural terrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Cone(ConeParams),
    Ramp(RampParams),
    Pits(PitsParams),
    Course(CourseParams),
    Flat { width: f64, height: f64 },
}

impl MapSpec {
    pub fn cone() -> Self {
        MapSpec::Cone(ConeParams::default())
    }

    pub fn ramp() -> Self {
        MapSpec::Ramp(RampParams::default())
    }

    pub fn pits() -> Self {
        MapSpec::Pits(PitsParams::default())
    }

    pub fn course() -> Self {
        MapSpec::Course(CourseParams::default())
    }

    /// World extent as (x0, y0, x1, y1).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        match self {
            MapSpec::Cone(p) => (
                -0.5 * p.plane_size.0,
                -0.5 * p.plane_size.1,
                0.5 * p.plane_size.0,
                0.5 * p.plane_size.1,
            ),
            MapSpec::Ramp(p) => (0.0, 0.0, p.total_length(), p.width),
            MapSpec::Pits(p) => (0.0, 0.0, p.length, p.width),
            MapSpec::Course(p) => p.ground,
            MapSpec::Flat { width, height } => (0.0, 0.0, *width, *height),
        }
    }

    /// Whether the terrain has a surface at all at this point. Maps are
    /// defined everywhere except the void beside the ramp band.
    pub fn is_defined(&self, x: f64, y: f64) -> bool {
        match self {
            MapSpec::Ramp(p) => {
                let (band_lo, band_hi) = p.ramp_band();
                x <= p.lower_length
                    || x >= p.lower_length + p.ramp_length
                    || (y >= band_lo && y <= band_hi)
            }
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |msg: &str| Err(GridError::InvalidArgument(msg.to_string()));
        let (x0, y0, x1, y1) = self.extent();
        if !(x1 > x0 && y1 > y0) {
            return bad("map extent must be strictly positive");
        }
        match self {
            MapSpec::Cone(p) => {
                if !(p.base_radius > p.top_radius && p.top_radius > 0.0 && p.cone_height > 0.0) {
                    return bad("cone radii must satisfy base > top > 0 with positive height");
                }
            }
            MapSpec::Ramp(p) => {
                if !(p.step_height > 0.0 && p.ramp_length > 0.0 && p.ramp_width > 0.0) {
                    return bad("ramp dimensions must be strictly positive");
                }
                if p.ramp_width > p.width {
                    return bad("ramp band cannot be wider than the map");
                }
            }
            MapSpec::Pits(p) => {
                if !(p.pit_depth > 0.0 && p.pit_size.0 > 0.0 && p.pit_size.1 > 0.0) {
                    return bad("pit dimensions and depth must be strictly positive");
                }
            }
            MapSpec::Course(p) => {
                if !(p.platform_height > 0.0
                    && p.low_ramp_slope > 0.0
                    && p.steep_ramp_slope > 0.0
                    && p.pit_depth > 0.0
                    && p.ledge_height > 0.0)
                {
                    return bad("course feature dimensions must be strictly positive");
                }
                if p.bricks.iter().any(|b| b.height <= 0.0 || b.size.0 <= 0.0 || b.size.1 <= 0.0) {
                    return bad("brick dimensions must be strictly positive");
                }
            }
            MapSpec::Flat { .. } => {}
        }
        Ok(())
    }

    /// Analytic ground-truth height at a world point (defined everywhere
    /// inside the extent; outside it returns the nearest feature-free value).
    pub fn height_fn(&self, x: f64, y: f64) -> f64 {
        let in_rect = |r: (f64, f64, f64, f64)| x >= r.0 && x <= r.2 && y >= r.1 && y <= r.3;
        match self {
            MapSpec::Flat { .. } => 0.0,
            MapSpec::Cone(p) => {
                let r = (x * x + y * y).sqrt();
                if r >= p.base_radius {
                    0.0
                } else if r <= p.top_radius {
                    p.cone_height
                } else {
                    p.cone_height * (p.base_radius - r) / (p.base_radius - p.top_radius)
                }
            }
            MapSpec::Ramp(p) => {
                let ramp_x0 = p.lower_length;
                let ramp_x1 = p.lower_length + p.ramp_length;
                let (band_lo, band_hi) = p.ramp_band();
                if x >= ramp_x1 {
                    p.step_height
                } else if x > ramp_x0 && y >= band_lo && y <= band_hi {
                    p.step_height * (x - ramp_x0) / p.ramp_length
                } else {
                    0.0
                }
            }
            MapSpec::Pits(p) => {
                for r in p.pit_rects() {
                    if in_rect(r) {
                        return -p.pit_depth;
                    }
                }
                0.0
            }
            MapSpec::Course(p) => {
                let mut z = 0.0;
                let low = p.low_ramp_rect();
                let steep = p.steep_ramp_rect();
                if in_rect(p.platform) {
                    z = p.platform_height;
                    if in_rect(p.pit_rect()) {
                        z -= p.pit_depth;
                    } else if in_rect(p.ledge_rect()) {
                        z += p.ledge_height;
                    }
                } else if in_rect(low) {
                    z = p.platform_height * (x - low.0) / (low.2 - low.0);
                } else if in_rect(steep) {
                    z = p.platform_height * (steep.2 - x) / (steep.2 - steep.0);
                } else {
                    for b in &p.bricks {
                        if in_rect(b.rect()) {
                            z = b.height;
                            break;
                        }
                    }
                }
                z
            }
        }
    }
}

/// Realize a map spec as a fully known elevation grid at the given
/// resolution. Cell heights sample the analytic height function at the cell
/// center, quantized through `f32`.
pub fn generate_map(spec: &MapSpec, resolution: f64) -> Result<ElevationGrid, GridError> {
    spec.validate()?;
    if !(resolution > 0.0) {
        return Err(GridError::InvalidArgument(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let (x0, y0, x1, y1) = spec.extent();
    let rows = ((x1 - x0) / resolution).round().max(1.0) as usize;
    let cols = ((y1 - y0) / resolution).round().max(1.0) as usize;
    let origin = (x0 + 0.5 * resolution, y0 + 0.5 * resolution);
    let mut grid = ElevationGrid::new(origin, resolution, rows, cols)?;
    for i in 0..rows {
        for j in 0..cols {
            let (x, y) = grid.cell_to_world(i, j);
            if spec.is_defined(x, y) {
                let z = spec.height_fn(x, y) as f32 as f64;
                grid.set_cell(i, j, z, 0.0);
            }
        }
    }
    Ok(grid)
}
