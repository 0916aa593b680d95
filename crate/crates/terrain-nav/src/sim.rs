//! Deterministic closed-loop episodes.
//!
//! An episode owns two grids: the ground-truth terrain the robot physically
//! drives on, and the belief map the navigation stack sees. In ground-truth
//! mode they are the same data; in online mode the belief starts empty and
//! is built live from a synthetic depth camera at the mapper cadence while
//! the robot moves. The planner rebuilds its traversability snapshot and
//! global path at its own (slower) cadence; the controller runs every step.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, normalize_angle, Pose};
use crate::grid::{generate_map, ElevationGrid, GridError, MapSpec};
use crate::mapping::{self, MeasurementModel, PointCloud};
use crate::mppi::{
    dynamics_step, ComponentBreakdown, ControlInput, MppiConfig, MppiController, RobotState,
    TerrainContext,
};
use crate::planner::{self, OccupancyMask};
use crate::terrain::{self, TraversabilityConfig, TraversabilityGrid};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Synthetic pinhole depth camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthCameraConfig {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians; vertical follows the aspect.
    pub hfov: f64,
    pub max_range: f64,
    /// Camera pose in the robot base frame.
    pub mount: Pose,
    /// Gaussian noise on the measured range, meters (0 disables).
    pub depth_noise_std: f64,
}

impl Default for DepthCameraConfig {
    fn default() -> Self {
        // Pitched down far enough that the near edge of the ground swath
        // overlaps the initial footprint fill; otherwise an unmapped ring
        // is left around the robot that clearance costs refuse to cross.
        Self {
            width: 160,
            height: 120,
            hfov: 1.2,
            max_range: 5.0,
            mount: Pose::new(0.1, 0.0, 0.3, 0.0, 0.5, 0.0),
            depth_noise_std: 0.0,
        }
    }
}

/// Cast one ray per pixel against the terrain height field. Hits are
/// returned in the sensor frame; rays that leave the map or exceed the
/// range budget are dropped.
pub fn render_depth_cloud(
    terrain: &ElevationGrid,
    sensor_pose: &Pose,
    cam: &DepthCameraConfig,
    mut noise_rng: Option<&mut ChaCha8Rng>,
) -> PointCloud {
    let rot = sensor_pose.rotation();
    let origin = [sensor_pose.x, sensor_pose.y, sensor_pose.z];
    let tan_h = (0.5 * cam.hfov).tan();
    let tan_v = tan_h * cam.height as f64 / cam.width as f64;
    let coarse = 0.5 * terrain.resolution();
    let noise = (cam.depth_noise_std > 0.0)
        .then(|| rand_distr::Normal::new(0.0, cam.depth_noise_std).unwrap());

    let mut points = Vec::new();
    for py in 0..cam.height {
        for px in 0..cam.width {
            // Camera frame: x forward, y left, z up.
            let dy = (1.0 - 2.0 * (px as f64 + 0.5) / cam.width as f64) * tan_h;
            let dz = (1.0 - 2.0 * (py as f64 + 0.5) / cam.height as f64) * tan_v;
            let norm = (1.0 + dy * dy + dz * dz).sqrt();
            let dir_cam = [1.0 / norm, dy / norm, dz / norm];
            let dir = [
                rot[0][0] * dir_cam[0] + rot[0][1] * dir_cam[1] + rot[0][2] * dir_cam[2],
                rot[1][0] * dir_cam[0] + rot[1][1] * dir_cam[1] + rot[1][2] * dir_cam[2],
                rot[2][0] * dir_cam[0] + rot[2][1] * dir_cam[1] + rot[2][2] * dir_cam[2],
            ];
            let Some(mut range) = march_ray(terrain, origin, dir, cam.max_range, coarse) else {
                continue;
            };
            if let (Some(n), Some(rng)) = (noise, noise_rng.as_deref_mut()) {
                range = (range + n.sample(rng)).max(0.0);
            }
            // Back into the sensor frame (pure rotation transpose).
            points.push([range * dir_cam[0], range * dir_cam[1], range * dir_cam[2]]);
        }
    }
    PointCloud { points, sensor_pose: *sensor_pose }
}

/// Coarse march + bisection refinement of the first surface crossing.
fn march_ray(
    terrain: &ElevationGrid,
    origin: [f64; 3],
    dir: [f64; 3],
    max_range: f64,
    coarse_step: f64,
) -> Option<f64> {
    let above = |t: f64| -> Option<f64> {
        let x = origin[0] + t * dir[0];
        let y = origin[1] + t * dir[1];
        let z = origin[2] + t * dir[2];
        terrain.height_at(x, y).value().map(|h| z - h)
    };
    let mut t_prev = 0.0;
    let mut above_prev = above(0.0);
    let mut t = coarse_step;
    while t <= max_range {
        let a = above(t);
        if let (Some(prev), Some(cur)) = (above_prev, a) {
            if prev > 0.0 && cur <= 0.0 {
                // Bisect the crossing.
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    match above(mid) {
                        Some(d) if d > 0.0 => lo = mid,
                        _ => hi = mid,
                    }
                }
                return Some(0.5 * (lo + hi));
            }
        }
        t_prev = t;
        above_prev = a;
        t += coarse_step;
    }
    None
}

/// Map source available to the navigation stack during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    /// The stack reads the ground-truth terrain directly.
    #[default]
    GroundTruth,
    /// The stack sees only what the depth camera has mapped.
    OnlineMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub x: f64,
    pub y: f64,
    /// Required arrival heading, checked only when present.
    pub yaw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub map: MapSpec,
    pub resolution: f64,
    pub start: StartPose,
    pub goal: GoalSpec,
    /// Fixed waypoint route. When present the follower tracks it with
    /// monotone arc-length progress instead of planning; the last waypoint
    /// must equal the goal position.
    pub route: Option<Vec<(f64, f64)>>,
    /// Goal position tolerance, meters.
    pub position_tolerance: f64,
    /// Goal heading tolerance, radians (used only when `goal.yaw` is set).
    pub heading_tolerance: f64,
    pub max_steps: usize,
    pub mapping: MappingMode,
    pub mppi: MppiConfig,
    pub trav: TraversabilityConfig,
    pub camera: DepthCameraConfig,
    pub sensor_model: MeasurementModel,
    /// Planner cadence in control steps.
    pub plan_every: usize,
    /// Mapper cadence in control steps.
    pub map_every: usize,
    /// Tip-over threshold on |roll| and |pitch|, radians.
    pub tip_threshold: f64,
    /// Declared stuck when net displacement over `stuck_window` steps stays
    /// below `stuck_distance`.
    pub stuck_window: usize,
    pub stuck_distance: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: String::new(),
            map: MapSpec::Flat { width: 10.0, height: 10.0 },
            resolution: 0.05,
            start: StartPose { x: 1.0, y: 1.0, yaw: 0.0 },
            goal: GoalSpec { x: 9.0, y: 9.0, yaw: None },
            route: None,
            position_tolerance: 0.3,
            heading_tolerance: 0.25,
            max_steps: 1000,
            mapping: MappingMode::GroundTruth,
            mppi: MppiConfig::default(),
            trav: TraversabilityConfig::default(),
            camera: DepthCameraConfig::default(),
            sensor_model: MeasurementModel::default(),
            plan_every: 10,
            map_every: 10,
            tip_threshold: 0.45,
            stuck_window: 100,
            stuck_distance: 0.05,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.position_tolerance > 0.0) || !(self.heading_tolerance > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.plan_every == 0 || self.map_every == 0 {
            return bad("cadences must be at least 1".into());
        }
        if let Some(route) = &self.route {
            if route.is_empty() {
                return bad("route cannot be empty".into());
            }
            let last = *route.last().unwrap();
            if geom::dist(last, (self.goal.x, self.goal.y)) > 1e-9 {
                return bad("route must end at the goal".into());
            }
        }
        self.mppi.validate().map_err(SimError::InvalidScenario)?;
        self.map.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Timeout,
    TipOver,
    Stuck,
}

/// One logged control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub state: RobotState,
    pub control: ControlInput,
    pub wall_ms: f64,
    pub components: ComponentBreakdown,
    pub min_total_cost: f64,
    pub effective_sample_size: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    /// Planar length of the driven trajectory, meters.
    pub path_length: f64,
    pub steps: usize,
    /// Steps times the control period, seconds.
    pub sim_time: f64,
    /// Mean controller step wall time, milliseconds.
    pub mean_step_ms: f64,
    pub final_state: RobotState,
    pub log: Vec<StepLog>,
}

impl EpisodeResult {
    pub fn succeeded(&self) -> bool {
        self.outcome == EpisodeOutcome::Success
    }
}

/// Run one scenario to termination. Deterministic for a fixed scenario.
pub fn run_episode(scenario: &Scenario) -> Result<EpisodeResult, SimError> {
    scenario.validate()?;
    let truth = generate_map(&scenario.map, scenario.resolution)?;
    let truth_ctx = TerrainContext {
        grid: &truth,
        footprint_radius: scenario.mppi.footprint_radius,
        pose_radius: scenario.mppi.pose_radius,
    };

    // Pose the robot on the terrain.
    let mut state = RobotState::at(scenario.start.x, scenario.start.y, scenario.start.yaw);
    if let Ok((fit, _)) =
        terrain::footprint_plane(&truth, state.x, state.y, scenario.mppi.pose_radius, false)
    {
        let (z, roll, pitch) = terrain::pose_on_plane(&fit, state.x, state.y, state.yaw);
        state.z = z;
        state.roll = roll;
        state.pitch = pitch;
    }

    let online = scenario.mapping == MappingMode::OnlineMapping;
    let mut belief = if online {
        let mut b =
            ElevationGrid::new(truth.origin(), truth.resolution(), truth.rows(), truth.cols())?;
        // Initialization fill with the larger footprint radius.
        let pose = robot_pose(&state);
        mapping::fill_footprint(&mut b, &pose, 0.4, 0.0, mapping::FILL_VARIANCE);
        b
    } else {
        truth.clone()
    };
    let mut camera_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5EED_CA3E);

    let mut trav = terrain::build_traversability(&belief, &scenario.trav);
    if trav.is_blocked_at(state.x, state.y).unwrap_or(true) {
        return Err(SimError::InvalidScenario(format!(
            "start ({}, {}) lies on a blocked cell",
            state.x, state.y
        )));
    }

    let goal_xy = (scenario.goal.x, scenario.goal.y);
    let mut route = scenario.route.clone().map(RouteFollower::new);
    let mut controller = MppiController::new(scenario.mppi.clone())
        .map_err(SimError::InvalidScenario)?;
    let mut global_path: Vec<(f64, f64)> = vec![state.position(), goal_xy];

    let mut log: Vec<StepLog> = Vec::with_capacity(scenario.max_steps.min(4096));
    let mut path_length = 0.0;
    let mut prev_pos = state.position();
    let mut outcome = EpisodeOutcome::Timeout;
    let mut steps = 0usize;

    let at_goal = |s: &RobotState| {
        geom::dist(s.position(), goal_xy) < scenario.position_tolerance
            && scenario.goal.yaw.is_none_or(|gy| {
                normalize_angle(s.yaw - gy).abs() < scenario.heading_tolerance
            })
    };

    if at_goal(&state) {
        return Ok(EpisodeResult {
            outcome: EpisodeOutcome::Success,
            path_length: 0.0,
            steps: 0,
            sim_time: 0.0,
            mean_step_ms: 0.0,
            final_state: state,
            log,
        });
    }

    for step in 0..scenario.max_steps {
        // Mapper cadence (online only): render, integrate, patch footprint.
        if online && step % scenario.map_every == 0 {
            let pose = robot_pose(&state);
            let cam_pose = pose.compose(&scenario.camera.mount);
            let cloud =
                render_depth_cloud(&truth, &cam_pose, &scenario.camera, Some(&mut camera_rng));
            mapping::integrate_cloud(&mut belief, &cloud, &scenario.sensor_model);
            mapping::fill_footprint(&mut belief, &pose, 0.25, 0.0, mapping::FILL_VARIANCE);
        }

        // Planner cadence: refresh the traversability snapshot and the
        // global path (fixed routes skip the planner).
        if step % scenario.plan_every == 0 {
            if online {
                trav = terrain::build_traversability(&belief, &scenario.trav);
            }
            if route.is_none() {
                global_path = plan_or_fallback(&trav, state.position(), goal_xy, &global_path);
            }
        }

        // Reference path and attraction point for the controller. In both
        // modes the controller chases a local target it can reach within
        // its horizon: a lookahead carrot on the fixed route (advanced with
        // monotone arc-length progress) or on the freshly planned path.
        let (ref_path, target) = match &mut route {
            Some(follower) => follower.update(state.position()),
            None => {
                let target = path_lookahead(&global_path, state.position(), LOOKAHEAD);
                (global_path.clone(), target)
            }
        };

        let (u, diag) = controller.step(&state, Some(&belief), &ref_path, target);
        state = dynamics_step(&state, u, scenario.mppi.dt, &scenario.mppi.limits, Some(&truth_ctx));
        steps = step + 1;

        path_length += geom::dist(prev_pos, state.position());
        prev_pos = state.position();
        log.push(StepLog {
            step,
            state,
            control: u,
            wall_ms: diag.wall_ms,
            components: diag.weighted_components,
            min_total_cost: diag.min_total_cost,
            effective_sample_size: diag.effective_sample_size,
            degenerate: diag.degenerate,
        });

        if state.roll.abs() > scenario.tip_threshold || state.pitch.abs() > scenario.tip_threshold
        {
            outcome = EpisodeOutcome::TipOver;
            break;
        }
        let route_consumed =
            route.as_ref().is_none_or(|f| f.on_last_leg() && f.remaining() <= LOOKAHEAD);
        if route_consumed && at_goal(&state) {
            outcome = EpisodeOutcome::Success;
            break;
        }
        if steps >= scenario.stuck_window {
            let anchor = log[steps - scenario.stuck_window].state.position();
            let wander = log[steps - scenario.stuck_window..]
                .iter()
                .map(|l| geom::dist(anchor, l.state.position()))
                .fold(0.0, f64::max);
            if wander < scenario.stuck_distance {
                outcome = EpisodeOutcome::Stuck;
                break;
            }
        }
    }

    let wall: f64 = log.iter().map(|l| l.wall_ms).sum();
    Ok(EpisodeResult {
        outcome,
        path_length,
        steps,
        sim_time: steps as f64 * scenario.mppi.dt,
        mean_step_ms: if steps > 0 { wall / steps as f64 } else { 0.0 },
        final_state: state,
        log,
    })
}

fn robot_pose(state: &RobotState) -> Pose {
    Pose::new(state.x, state.y, state.z, state.roll, state.pitch, state.yaw)
}

/// Lookahead distance of the attraction point along the planned path.
const LOOKAHEAD: f64 = 2.0;

/// Radius within which a leg's end point counts as visited.
const LEG_ARRIVAL: f64 = 0.5;

/// Tracks progress along a fixed route. The route is split into legs at
/// direction reversals (sharper than 120 degrees); within a leg the robot
/// chases a lookahead carrot on the leg polyline with monotone arc-length
/// progress, and a leg hands over to the next only once its end point has
/// actually been visited. This keeps out-and-back routes faithful: the
/// projection can never alias onto the return leg, and the turnaround point
/// cannot be short-circuited.
struct RouteFollower {
    legs: Vec<Vec<(f64, f64)>>,
    cums: Vec<Vec<f64>>,
    leg: usize,
    progress: f64,
}

impl RouteFollower {
    fn new(path: Vec<(f64, f64)>) -> Self {
        let mut legs: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut current = vec![path[0]];
        for k in 1..path.len() {
            current.push(path[k]);
            if k + 1 < path.len() {
                let a = path[k - 1];
                let b = path[k];
                let c = path[k + 1];
                let u = (b.0 - a.0, b.1 - a.1);
                let v = (c.0 - b.0, c.1 - b.1);
                let dot = u.0 * v.0 + u.1 * v.1;
                let norms = (u.0 * u.0 + u.1 * u.1).sqrt() * (v.0 * v.0 + v.1 * v.1).sqrt();
                if norms > 0.0 && dot / norms < -0.5 {
                    legs.push(current);
                    current = vec![b];
                }
            }
        }
        legs.push(current);
        let cums: Vec<Vec<f64>> = legs
            .iter()
            .map(|leg| {
                let mut cum = vec![0.0];
                let mut acc = 0.0;
                for w in leg.windows(2) {
                    acc += geom::dist(w[0], w[1]);
                    cum.push(acc);
                }
                cum
            })
            .collect();
        Self { legs, cums, leg: 0, progress: 0.0 }
    }

    fn leg_total(&self) -> f64 {
        *self.cums[self.leg].last().unwrap()
    }

    fn on_last_leg(&self) -> bool {
        self.leg + 1 == self.legs.len()
    }

    /// Remaining arc length to the end of the whole route.
    fn remaining(&self) -> f64 {
        let ahead: f64 =
            self.cums[self.leg + 1..].iter().map(|c| c.last().unwrap()).sum();
        self.leg_total() - self.progress + ahead
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let leg = &self.legs[self.leg];
        let cum = &self.cums[self.leg];
        let s = s.clamp(0.0, self.leg_total());
        for (k, w) in leg.windows(2).enumerate() {
            if s <= cum[k + 1] || k + 2 == leg.len() {
                let seg = cum[k + 1] - cum[k];
                let t = if seg > 0.0 { ((s - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
                return (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
            }
        }
        *leg.last().unwrap()
    }

    /// Advance leg/progress bookkeeping and return the local reference
    /// window plus the carrot for this control step.
    fn update(&mut self, pos: (f64, f64)) -> (Vec<(f64, f64)>, (f64, f64)) {
        // Hand over to the next leg once this leg is spent and its end has
        // been visited.
        let leg_end = *self.legs[self.leg].last().unwrap();
        if !self.on_last_leg()
            && self.leg_total() - self.progress < LOOKAHEAD
            && geom::dist(pos, leg_end) <= LEG_ARRIVAL
        {
            self.leg += 1;
            self.progress = 0.0;
        }

        let cum = &self.cums[self.leg];
        let window_hi = self.progress + 1.5 * LOOKAHEAD;
        let mut best = (f64::INFINITY, self.progress);
        for (k, w) in self.legs[self.leg].windows(2).enumerate() {
            if cum[k + 1] < self.progress - 0.5 || cum[k] > window_hi {
                continue;
            }
            let (a, b) = (w[0], w[1]);
            let ab = (b.0 - a.0, b.1 - a.1);
            let len2 = ab.0 * ab.0 + ab.1 * ab.1;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((pos.0 - a.0) * ab.0 + (pos.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0)
            };
            let p = (a.0 + t * ab.0, a.1 + t * ab.1);
            let d = geom::dist2(pos, p);
            let s = cum[k] + t * (cum[k + 1] - cum[k]);
            if d < best.0 {
                best = (d, s);
            }
        }
        self.progress = self.progress.max(best.1.min(self.leg_total()));

        let carrot = self.point_at(self.progress + LOOKAHEAD);
        let lo = self.progress - 0.5;
        let hi = self.progress + 2.0 * LOOKAHEAD;
        let mut window = vec![self.point_at(lo)];
        for (k, &c) in self.cums[self.leg].iter().enumerate() {
            if c > lo && c < hi {
                window.push(self.legs[self.leg][k]);
            }
        }
        window.push(self.point_at(hi));
        (window, carrot)
    }
}

/// The point `lookahead` meters along the path beyond the robot's closest
/// point on it; the path end once the remainder is shorter than that.
fn path_lookahead(path: &[(f64, f64)], pos: (f64, f64), lookahead: f64) -> (f64, f64) {
    let Some(&last) = path.last() else {
        return pos;
    };
    if path.len() < 2 {
        return last;
    }
    // Closest point over all segments.
    let mut best = (f64::INFINITY, 0usize, path[0]);
    for (k, w) in path.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let ab = (b.0 - a.0, b.1 - a.1);
        let len2 = ab.0 * ab.0 + ab.1 * ab.1;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((pos.0 - a.0) * ab.0 + (pos.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0)
        };
        let p = (a.0 + t * ab.0, a.1 + t * ab.1);
        let d = geom::dist2(pos, p);
        if d < best.0 {
            best = (d, k, p);
        }
    }
    // Walk forward along the polyline from the projection.
    let (_, seg, mut cur) = best;
    let mut remaining = lookahead;
    for k in seg..path.len() - 1 {
        let end = path[k + 1];
        let d = geom::dist(cur, end);
        if d >= remaining {
            let t = if d == 0.0 { 1.0 } else { remaining / d };
            return (cur.0 + t * (end.0 - cur.0), cur.1 + t * (end.1 - cur.1));
        }
        remaining -= d;
        cur = end;
    }
    last
}

/// Plan with Theta*, seeding from the nearest free cell when the robot sits
/// inside the inflation margin; keep the previous path when no new plan
/// exists this cycle.
fn plan_or_fallback(
    trav: &TraversabilityGrid,
    start: (f64, f64),
    goal: (f64, f64),
    previous: &[(f64, f64)],
) -> Vec<(f64, f64)> {
    let mask = OccupancyMask::from_inflated(trav);
    let plan_start = if mask
        .world_to_cell(start.0, start.1)
        .map(|(i, j)| mask.is_blocked(i, j))
        .unwrap_or(true)
    {
        nearest_free_cell(&mask, start, 0.6)
    } else {
        Some(start)
    };
    if let Some(s) = plan_start {
        if let Ok(path) = planner::plan_theta_star(&mask, s, goal) {
            let mut waypoints = path.waypoints;
            if s != start {
                waypoints.insert(0, start);
            }
            return waypoints;
        }
    }
    if previous.is_empty() {
        vec![start, goal]
    } else {
        previous.to_vec()
    }
}

fn nearest_free_cell(mask: &OccupancyMask, p: (f64, f64), radius: f64) -> Option<(f64, f64)> {
    let eps = mask.resolution();
    let r_cells = (radius / eps).ceil() as isize;
    let center = mask.world_to_cell(p.0, p.1)?;
    let mut best: Option<(f64, (usize, usize))> = None;
    for di in -r_cells..=r_cells {
        for dj in -r_cells..=r_cells {
            let i = center.0 as isize + di;
            let j = center.1 as isize + dj;
            if i < 0 || j < 0 || i as usize >= mask.rows() || j as usize >= mask.cols() {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            if mask.is_blocked(i, j) {
                continue;
            }
            let c = mask.cell_to_world(i, j);
            let d = geom::dist(p, c);
            if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (i, j)));
            }
        }
    }
    best.map(|(_, c)| mask.cell_to_world(c.0, c.1))
}

/// Write the per-step log as JSON lines.
pub fn write_episode_jsonl(result: &EpisodeResult, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for entry in &result.log {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Write the driven trajectory as `x,y,z,yaw` CSV rows.
pub fn write_trajectory_csv(result: &EpisodeResult, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,z,yaw")?;
    for entry in &result.log {
        let s = &entry.state;
        writeln!(w, "{},{},{},{}", s.x, s.y, s.z, s.yaw)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CourseParams;
    use crate::mppi::{CostConfig, CostWeights};
    use approx::assert_relative_eq;

    #[test]
    fn camera_straight_down_hits_plane() {
        let flat = generate_map(&MapSpec::Flat { width: 4.0, height: 4.0 }, 0.1).unwrap();
        // Pitch +pi/2 points the camera's forward axis straight down.
        let pose = Pose::new(2.0, 2.0, 1.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let cam = DepthCameraConfig {
            width: 3,
            height: 3,
            hfov: 0.5,
            max_range: 3.0,
            mount: Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            depth_noise_std: 0.0,
        };
        let cloud = render_depth_cloud(&flat, &pose, &cam, None);
        assert_eq!(cloud.points.len(), 9);
        // Center pixel: exact range 1. All hits lie on the z=0 plane.
        let center = cloud.points[4];
        assert_relative_eq!(center[0], 1.0, epsilon = 1e-6);
        for p in &cloud.points {
            let w = pose.transform(*p);
            assert_relative_eq!(w[2], 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn camera_point_budget() {
        let flat = generate_map(&MapSpec::Flat { width: 6.0, height: 6.0 }, 0.1).unwrap();
        let pose = Pose::new(3.0, 3.0, 0.5, 0.0, 0.4, 0.0);
        let cam = DepthCameraConfig::default();
        let cloud = render_depth_cloud(&flat, &pose, &cam, None);
        assert!(cloud.points.len() <= 160 * 120);
        assert!(!cloud.points.is_empty());
    }

    #[test]
    fn camera_hits_match_analytic_ramp_plane() {
        let ramp = generate_map(&MapSpec::ramp(), 0.05).unwrap();
        // Above the lower surface looking down-range toward the ramp.
        let pose = Pose::new(6.0, 4.0, 1.0, 0.0, 0.5, 0.0);
        let cam = DepthCameraConfig {
            width: 32,
            height: 24,
            hfov: 0.9,
            max_range: 6.0,
            ..Default::default()
        };
        let cloud = render_depth_cloud(&ramp, &pose, &cam, None);
        assert!(!cloud.points.is_empty());
        let mut checked = 0;
        for p in &cloud.points {
            let w = pose.transform(*p);
            // Strictly interior ramp-band hits follow z = 0.1 (x - 7).
            if w[0] > 7.2 && w[0] < 11.8 && w[1] > 2.3 && w[1] < 5.7 {
                let expect = 0.5 * (w[0] - 7.0) / 5.0;
                assert!((w[2] - expect).abs() < 1e-3, "hit {w:?} expected z {expect}");
                checked += 1;
            }
        }
        assert!(checked > 10, "only {checked} ramp hits");
    }

    fn quick_flat_scenario() -> Scenario {
        Scenario {
            map: MapSpec::Flat { width: 8.0, height: 4.0 },
            resolution: 0.05,
            start: StartPose { x: 1.0, y: 2.0, yaw: 0.0 },
            goal: GoalSpec { x: 4.0, y: 2.0, yaw: None },
            max_steps: 400,
            mppi: MppiConfig { samples: 80, horizon: 20, seed: 5, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn start_at_goal_is_immediate_success() {
        let mut sc = quick_flat_scenario();
        sc.goal = GoalSpec { x: 1.0, y: 2.0, yaw: None };
        let r = run_episode(&sc).unwrap();
        assert_eq!(r.outcome, EpisodeOutcome::Success);
        assert_eq!(r.steps, 0);
        assert_eq!(r.path_length, 0.0);
    }

    #[test]
    fn flat_goal_seek_succeeds() {
        let r = run_episode(&quick_flat_scenario()).unwrap();
        assert_eq!(r.outcome, EpisodeOutcome::Success, "{:?}", r.outcome);
        assert!(r.path_length >= 2.7 && r.path_length < 6.0, "length {}", r.path_length);
        assert!(geom::dist(r.final_state.position(), (4.0, 2.0)) < 0.3);
        // Sim time is steps times dt.
        assert_relative_eq!(r.sim_time, r.steps as f64 * 0.1, epsilon = 1e-12);
    }

    #[test]
    fn episodes_replay_bit_identically() {
        let sc = quick_flat_scenario();
        let strip_wall_times = |mut r: EpisodeResult| {
            r.mean_step_ms = 0.0;
            for l in &mut r.log {
                l.wall_ms = 0.0;
            }
            r
        };
        let a = strip_wall_times(run_episode(&sc).unwrap());
        let b = strip_wall_times(run_episode(&sc).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn blocked_start_is_invalid() {
        let mut sc = quick_flat_scenario();
        // Mid-flank of the cone: far too steep to stand on.
        sc.map = MapSpec::cone();
        sc.start = StartPose { x: 2.5, y: 0.0, yaw: 0.0 };
        sc.goal = GoalSpec { x: 4.5, y: 4.5, yaw: None };
        match run_episode(&sc) {
            Err(SimError::InvalidScenario(msg)) => assert!(msg.contains("blocked")),
            other => panic!("expected invalid scenario, got {other:?}"),
        }
    }

    #[test]
    fn forced_steep_ramp_ascent_tips_over() {
        // Goal straight up the steep ramp with every hazard cost disabled:
        // the robot charges the slope and trips the tip-over check.
        let course = CourseParams::default();
        let steep = course.steep_ramp_rect();
        let sc = Scenario {
            map: MapSpec::course(),
            resolution: 0.05,
            start: StartPose { x: steep.2 + 0.5, y: 1.0, yaw: std::f64::consts::PI },
            goal: GoalSpec { x: 0.0, y: 1.0, yaw: None },
            max_steps: 300,
            mppi: MppiConfig {
                samples: 80,
                horizon: 20,
                seed: 3,
                cost: CostConfig {
                    path_distance: CostWeights::new(0.0, 1.0),
                    slope_traversability: CostWeights::new(0.0, 1.0),
                    slope: CostWeights::new(0.0, 1.0),
                    roughness: CostWeights::new(0.0, 1.0),
                    tip_hazard: CostWeights::new(0.0, 1.0),
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run_episode(&sc).unwrap();
        assert_eq!(r.outcome, EpisodeOutcome::TipOver, "{:?}", r.outcome);
        assert!(r.final_state.pitch.abs() > 0.45 || r.final_state.roll.abs() > 0.45);
    }

    #[test]
    fn walled_in_robot_reports_stuck() {
        // Two deep full-width trenches seal the start region; the goal lies
        // beyond them.
        let mut sc = quick_flat_scenario();
        sc.map = MapSpec::Pits(crate::grid::PitsParams {
            length: 8.0,
            width: 4.0,
            pit_size: (0.2, 4.0),
            pit_depth: 0.4,
            pit_centers: vec![(0.5, 2.0), (1.8, 2.0)],
        });
        sc.start = StartPose { x: 1.15, y: 2.0, yaw: 0.0 };
        sc.goal = GoalSpec { x: 7.0, y: 2.0, yaw: None };
        sc.max_steps = 400;
        let r = run_episode(&sc).unwrap();
        assert!(
            matches!(r.outcome, EpisodeOutcome::Stuck | EpisodeOutcome::Timeout),
            "{:?}",
            r.outcome
        );
    }

    #[test]
    fn ground_truth_mode_never_maps() {
        // In ground-truth mode the belief is the terrain itself; nothing in
        // the loop may mutate it. Compare against a fresh generation.
        let sc = quick_flat_scenario();
        let r1 = run_episode(&sc).unwrap();
        let again = generate_map(&sc.map, sc.resolution).unwrap();
        let regen = generate_map(&sc.map, sc.resolution).unwrap();
        assert_eq!(again, regen);
        assert!(r1.succeeded());
    }

    #[test]
    fn lookahead_walks_the_path() {
        let path = [(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)];
        // Projection onto the first segment, carrot 2 m further along.
        let t = path_lookahead(&path, (1.0, 0.5), 2.0);
        assert_relative_eq!(t.0, 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.1, 0.0, epsilon = 1e-12);
        // Carrot bends around the corner.
        let t = path_lookahead(&path, (2.5, 0.1), 2.0);
        assert_relative_eq!(t.0, 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.1, 1.5, epsilon = 1e-12);
        // Near the end the carrot is the goal itself.
        let t = path_lookahead(&path, (3.0, 3.5), 2.0);
        assert_eq!(t, (3.0, 4.0));
    }

    #[test]
    fn path_length_matches_log() {
        let r = run_episode(&quick_flat_scenario()).unwrap();
        let mut acc = 0.0;
        let mut prev = (1.0, 2.0);
        for l in &r.log {
            acc += geom::dist(prev, l.state.position());
            prev = l.state.position();
        }
        assert_relative_eq!(acc, r.path_length, epsilon = 1e-9);
    }

    #[test]
    fn log_writers_produce_files() {
        let dir = std::env::temp_dir().join("terrain_nav_sim_logs");
        std::fs::create_dir_all(&dir).unwrap();
        let mut sc = quick_flat_scenario();
        sc.max_steps = 30;
        let r = run_episode(&sc).unwrap();
        let jsonl = dir.join("ep.jsonl");
        let csv = dir.join("ep.csv");
        write_episode_jsonl(&r, &jsonl).unwrap();
        write_trajectory_csv(&r, &csv).unwrap();
        let text = std::fs::read_to_string(&jsonl).unwrap();
        assert_eq!(text.lines().count(), r.log.len());
        let first: StepLog = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, r.log[0]);
        assert_eq!(
            std::fs::read_to_string(&csv).unwrap().lines().count(),
            r.log.len() + 1
        );
    }
}
