//! Global path planning on the binarized traversability mask.
//!
//! [`plan_theta_star`] is the production planner: an any-angle search whose
//! parent pointers may skip across the grid wherever line of sight holds.
//! [`plan_a_star`] is the 8-connected baseline used as a length oracle in
//! tests and available as a fallback. Both use the same supercover
//! line-of-sight predicate: a segment is free only if every cell its closed
//! swath touches (including cells merely grazed at an edge or corner) is
//! unblocked.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geom;
use crate::terrain::TraversabilityGrid;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PlannerError {
    #[error("{0} lies on a blocked or out-of-map cell")]
    InvalidEndpoint(&'static str),
    #[error("no path exists between start and goal")]
    Unreachable,
}

/// A planar occupancy mask with the same center-based cell convention as
/// the elevation grid.
#[derive(Debug, Clone)]
pub struct OccupancyMask {
    origin: (f64, f64),
    resolution: f64,
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
}

impl OccupancyMask {
    pub fn new(origin: (f64, f64), resolution: f64, rows: usize, cols: usize) -> Self {
        assert!(resolution > 0.0 && rows > 0 && cols > 0);
        Self { origin, resolution, rows, cols, blocked: vec![false; rows * cols] }
    }

    /// Planning view of a traversability grid's inflated mask.
    pub fn from_inflated(t: &TraversabilityGrid) -> Self {
        Self {
            origin: t.origin(),
            resolution: t.resolution(),
            rows: t.rows(),
            cols: t.cols(),
            blocked: t.inflated_mask().to_vec(),
        }
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

    pub fn set_blocked(&mut self, i: usize, j: usize, blocked: bool) {
        assert!(i < self.rows && j < self.cols);
        self.blocked[i * self.cols + j] = blocked;
    }

    #[inline]
    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[i * self.cols + j]
    }

    #[inline]
    fn is_free_signed(&self, i: isize, j: isize) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.rows
            && (j as usize) < self.cols
            && !self.blocked[i as usize * self.cols + j as usize]
    }

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
}

/// A planned path: world-frame waypoints plus the summed segment length.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub waypoints: Vec<(f64, f64)>,
    pub length: f64,
}

impl GridPath {
    fn from_waypoints(waypoints: Vec<(f64, f64)>) -> Self {
        let length = geom::polyline_length(&waypoints);
        Self { waypoints, length }
    }

    /// Write the waypoints as `x,y` CSV rows.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y")?;
        for (x, y) in &self.waypoints {
            writeln!(w, "{x},{y}")?;
        }
        w.flush()
    }
}

// Boundary proximity tolerance in cell units for the supercover walk.
const EDGE_TOL: f64 = 1e-9;

/// The one or two cell indices (per axis) containing continuous cell-space
/// coordinate `s`; two when `s` sits on a cell boundary.
#[inline]
fn axis_cells(s: f64) -> (isize, Option<isize>) {
    let shifted = s + 0.5;
    let nearest = shifted.round();
    if (shifted - nearest).abs() <= EDGE_TOL {
        // On the boundary between cells nearest-1 and nearest.
        (nearest as isize - 1, Some(nearest as isize))
    } else {
        (shifted.floor() as isize, None)
    }
}

/// Visit every cell of the closed supercover of segment p1-p2, stopping
/// early when `visit` returns false. Returns false on early stop. Cells are
/// given in signed coordinates; callers decide how to treat out-of-range.
fn walk_supercover(
    mask: &OccupancyMask,
    p1: (f64, f64),
    p2: (f64, f64),
    mut visit: impl FnMut(isize, isize) -> bool,
) -> bool {
    let eps = mask.resolution;
    let su0 = (p1.0 - mask.origin.0) / eps;
    let sv0 = (p1.1 - mask.origin.1) / eps;
    let su1 = (p2.0 - mask.origin.0) / eps;
    let sv1 = (p2.1 - mask.origin.1) / eps;
    let du = su1 - su0;
    let dv = sv1 - sv0;

    // Crossing parameters of every half-integer boundary along each axis.
    let mut events: Vec<f64> = vec![0.0, 1.0];
    for (s0, d) in [(su0, du), (sv0, dv)] {
        if d.abs() > 0.0 {
            let (lo, hi) = if d > 0.0 { (s0, s0 + d) } else { (s0 + d, s0) };
            let mut b = (lo + 0.5).ceil() - 0.5;
            while b <= hi {
                let t = (b - s0) / d;
                if t > 0.0 && t < 1.0 {
                    events.push(t);
                }
                b += 1.0;
            }
        }
    }
    events.sort_unstable_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut check_point = |t: f64| -> bool {
        let su = su0 + t * du;
        let sv = sv0 + t * dv;
        let (iu, iu2) = axis_cells(su);
        let (jv, jv2) = axis_cells(sv);
        for i in [Some(iu), iu2].into_iter().flatten() {
            for j in [Some(jv), jv2].into_iter().flatten() {
                if !visit(i, j) {
                    return false;
                }
            }
        }
        true
    };

    // Check at every boundary event (picks up edge- and corner-touches) and
    // at every interval midpoint (the generic interior cell).
    for k in 0..events.len() {
        if !check_point(events[k]) {
            return false;
        }
        if k + 1 < events.len() {
            let mid = 0.5 * (events[k] + events[k + 1]);
            if !check_point(mid) {
                return false;
            }
        }
    }
    true
}

/// True iff no blocked (or out-of-map) cell touches the closed segment.
pub fn line_of_sight(mask: &OccupancyMask, p1: (f64, f64), p2: (f64, f64)) -> bool {
    walk_supercover(mask, p1, p2, |i, j| mask.is_free_signed(i, j))
}

/// All supercover cells of a segment, clipped to the mask bounds.
pub fn supercover_cells(mask: &OccupancyMask, p1: (f64, f64), p2: (f64, f64)) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    walk_supercover(mask, p1, p2, |i, j| {
        if i >= 0 && j >= 0 && (i as usize) < mask.rows && (j as usize) < mask.cols {
            let c = (i as usize, j as usize);
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        true
    });
    cells
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    f: f64,
    g: f64,
    cell: (usize, usize),
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: smaller f first, then larger g, then
        // lexicographically smaller cell. Fixed tie-breaking keeps plans
        // reproducible.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// A diagonal step must not cut a blocked corner: both orthogonal cells
/// have to be free, matching the supercover of the diagonal segment.
#[inline]
fn step_allowed(mask: &OccupancyMask, from: (usize, usize), di: isize, dj: isize) -> bool {
    let (i, j) = (from.0 as isize + di, from.1 as isize + dj);
    if !mask.is_free_signed(i, j) {
        return false;
    }
    if di != 0 && dj != 0 {
        return mask.is_free_signed(from.0 as isize + di, from.1 as isize)
            && mask.is_free_signed(from.0 as isize, from.1 as isize + dj);
    }
    true
}

fn endpoints(
    mask: &OccupancyMask,
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<((usize, usize), (usize, usize)), PlannerError> {
    let s = mask.world_to_cell(start.0, start.1).ok_or(PlannerError::InvalidEndpoint("start"))?;
    let g = mask.world_to_cell(goal.0, goal.1).ok_or(PlannerError::InvalidEndpoint("goal"))?;
    if mask.is_blocked(s.0, s.1) {
        return Err(PlannerError::InvalidEndpoint("start"));
    }
    if mask.is_blocked(g.0, g.1) {
        return Err(PlannerError::InvalidEndpoint("goal"));
    }
    Ok((s, g))
}

/// 8-connected A* with the octile-distance heuristic. Waypoints walk every
/// cell of the path; the exact start/goal positions replace their cell
/// centers at the ends.
pub fn plan_a_star(
    mask: &OccupancyMask,
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<GridPath, PlannerError> {
    let (s, g) = endpoints(mask, start, goal)?;
    let eps = mask.resolution;
    let octile = |c: (usize, usize)| {
        let di = (c.0 as f64 - g.0 as f64).abs();
        let dj = (c.1 as f64 - g.1 as f64).abs();
        eps * (di.max(dj) + (SQRT2 - 1.0) * di.min(dj))
    };

    let n = mask.rows * mask.cols;
    let idx = |c: (usize, usize)| c.0 * mask.cols + c.1;
    let mut g_score = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut open = BinaryHeap::new();
    g_score[idx(s)] = 0.0;
    open.push(HeapEntry { f: octile(s), g: 0.0, cell: s });

    while let Some(entry) = open.pop() {
        let cur = entry.cell;
        if entry.g > g_score[idx(cur)] {
            continue; // stale
        }
        if cur == g {
            let mut cells = vec![cur];
            let mut c = cur;
            while let Some(p) = parent[idx(c)] {
                cells.push(p);
                c = p;
            }
            cells.reverse();
            let mut waypoints: Vec<(f64, f64)> =
                cells.iter().map(|&c| mask.cell_to_world(c.0, c.1)).collect();
            waypoints[0] = start;
            let last = waypoints.len() - 1;
            waypoints[last] = goal;
            return Ok(GridPath::from_waypoints(waypoints));
        }
        for (di, dj) in NEIGHBORS {
            if !step_allowed(mask, cur, di, dj) {
                continue;
            }
            let nb = ((cur.0 as isize + di) as usize, (cur.1 as isize + dj) as usize);
            let step = if di != 0 && dj != 0 { SQRT2 * eps } else { eps };
            let cand = g_score[idx(cur)] + step;
            if cand < g_score[idx(nb)] {
                g_score[idx(nb)] = cand;
                parent[idx(nb)] = Some(cur);
                open.push(HeapEntry { f: cand + octile(nb), g: cand, cell: nb });
            }
        }
    }
    Err(PlannerError::Unreachable)
}

/// Any-angle planner: A* expansion order, but each neighbor first tries to
/// descend directly from its parent's parent whenever line of sight holds,
/// so path segments may connect any pair of mutually visible cells.
pub fn plan_theta_star(
    mask: &OccupancyMask,
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<GridPath, PlannerError> {
    let (s, g) = endpoints(mask, start, goal)?;
    let n = mask.rows * mask.cols;
    let idx = |c: (usize, usize)| c.0 * mask.cols + c.1;
    // The root vertex sits at the exact start position; every other vertex
    // at its cell center.
    let pos = |c: (usize, usize)| if c == s { start } else { mask.cell_to_world(c.0, c.1) };
    let h = |c: (usize, usize)| geom::dist(pos(c), goal);

    let mut g_score = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut open = BinaryHeap::new();
    g_score[idx(s)] = 0.0;
    open.push(HeapEntry { f: h(s), g: 0.0, cell: s });

    while let Some(entry) = open.pop() {
        let cur = entry.cell;
        if entry.g > g_score[idx(cur)] {
            continue;
        }
        if cur == g {
            break;
        }
        for (di, dj) in NEIGHBORS {
            if !step_allowed(mask, cur, di, dj) {
                continue;
            }
            let nb = ((cur.0 as isize + di) as usize, (cur.1 as isize + dj) as usize);
            // Path 2: skip straight to the parent when visible (never longer
            // than relaying through `cur` by the triangle inequality).
            let (via, cand) = match parent[idx(cur)] {
                Some(pp) if line_of_sight(mask, pos(pp), pos(nb)) => {
                    (pp, g_score[idx(pp)] + geom::dist(pos(pp), pos(nb)))
                }
                _ => (cur, g_score[idx(cur)] + geom::dist(pos(cur), pos(nb))),
            };
            if cand + 1e-12 < g_score[idx(nb)] {
                g_score[idx(nb)] = cand;
                parent[idx(nb)] = Some(via);
                open.push(HeapEntry { f: cand + h(nb), g: cand, cell: nb });
            }
        }
    }
    if !g_score[idx(g)].is_finite() {
        return Err(PlannerError::Unreachable);
    }

    let mut cells = vec![g];
    let mut c = g;
    while let Some(p) = parent[idx(c)] {
        cells.push(p);
        c = p;
    }
    cells.reverse();
    let mut waypoints: Vec<(f64, f64)> = cells.iter().map(|&c| pos(c)).collect();
    // The goal cell's center becomes the exact goal point; keep the center
    // as an extra waypoint only if the exact point breaks visibility.
    let last = waypoints.len() - 1;
    if cells[last] == g {
        let goal_center = mask.cell_to_world(g.0, g.1);
        if last > 0 && !line_of_sight(mask, waypoints[last - 1], goal) {
            waypoints.push(goal);
        } else if waypoints[last] != goal {
            waypoints[last] = goal;
        }
        let _ = goal_center;
    }
    Ok(GridPath::from_waypoints(waypoints))
}
