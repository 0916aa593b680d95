//! Trajectory cost components and their weighted aggregation.
//!
//! Every component maps a rolled-out trajectory to a non-negative score;
//! the total is the weighted power sum `sum_i alpha_i * S_i^beta_i`. Two
//! terrain-aware variants exist: Slope-Traversability scores the inverse
//! clearance to the nearest untraversable cell, Slope-Roughness sums the
//! footprint plane inclination and the RMS plane residual along the
//! trajectory.

use serde::{Deserialize, Serialize};

use crate::geom;
use crate::grid::ElevationGrid;
use crate::terrain::{self, TraversabilityGrid};

use super::Trajectory;

/// Which terrain-aware component the controller runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    SlopeTraversability,
    SlopeRoughness,
}

impl CostVariant {
    pub fn short_name(&self) -> &'static str {
        match self {
            CostVariant::SlopeTraversability => "st",
            CostVariant::SlopeRoughness => "sr",
        }
    }
}

/// Weight and exponent of one cost component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl CostWeights {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        if self.alpha == 0.0 {
            0.0
        } else if self.beta == 1.0 {
            self.alpha * s
        } else {
            self.alpha * s.powf(self.beta)
        }
    }
}

/// Whether the goal-distance component scores the final state or the
/// closest state of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GoalCostMode {
    #[default]
    FinalState,
    MinOverTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub variant: CostVariant,
    pub path_distance: CostWeights,
    pub goal_distance: CostWeights,
    pub backward: CostWeights,
    pub slope_traversability: CostWeights,
    pub slope: CostWeights,
    pub roughness: CostWeights,
    /// Clearance regularizer: the ST score is 1/(d_min + d0).
    pub d0: f64,
    /// Clearances beyond this cap contribute the same minimal score.
    pub d_cap: f64,
    /// Per-state substitute for slope/roughness over unsupported footprints.
    pub insufficient_penalty: f64,
    /// Minimum fraction of the nominal footprint disk that must be known
    /// for a slope/roughness sample to count as supported. Guards against
    /// trusting a fit taken half over unmapped ground (an occluded drop
    /// looks perfectly flat otherwise).
    pub support_fraction: f64,
    /// Attitude guard: rollout states whose |roll| or |pitch| exceed this
    /// margin are charged for the excess, keeping samples clear of poses
    /// the vehicle cannot hold.
    pub tip_hazard: CostWeights,
    pub tip_margin: f64,
    /// Score clearance as a per-state sum instead of the trajectory minimum.
    pub st_sum_over_states: bool,
    pub goal_mode: GoalCostMode,
}

impl Default for CostConfig {
    fn default() -> Self {
        // Weights balance three regimes: the goal pull must pay the small
        // roughness toll of a ramp crease (unavoidable terrain), must not
        // pay the much larger toll of crossing a pit (a detour exists), and
        // must never out-bid the clearance wall of a real obstacle.
        Self {
            variant: CostVariant::SlopeTraversability,
            path_distance: CostWeights::new(0.8, 1.0),
            goal_distance: CostWeights::new(3.0, 1.0),
            backward: CostWeights::new(10.0, 1.0),
            slope_traversability: CostWeights::new(1.0, 1.0),
            slope: CostWeights::new(0.6, 1.0),
            roughness: CostWeights::new(15.0, 1.0),
            d0: 0.05,
            d_cap: 2.0,
            insufficient_penalty: 1e3,
            support_fraction: 0.8,
            tip_hazard: CostWeights::new(500.0, 1.0),
            tip_margin: 0.35,
            st_sum_over_states: false,
            goal_mode: GoalCostMode::FinalState,
        }
    }
}

/// Attitude excess beyond the tip margin, summed over the trajectory.
pub fn cost_tip_hazard(traj: &Trajectory, tip_margin: f64) -> f64 {
    traj.states
        .iter()
        .skip(1)
        .map(|s| (s.roll.abs().max(s.pitch.abs()) - tip_margin).max(0.0))
        .sum()
}

/// Smallest number of known cells a footprint of radius `r` needs on a grid
/// with cell size `eps` to count as supported, given the fraction.
pub fn support_threshold(r: f64, eps: f64, fraction: f64) -> usize {
    let nominal = std::f64::consts::PI * r * r / (eps * eps);
    ((nominal * fraction).floor() as usize).max(3)
}

/// Mean distance of the trajectory states from the reference polyline.
pub fn cost_path_distance(traj: &Trajectory, path: &[(f64, f64)]) -> f64 {
    if path.is_empty() || traj.states.is_empty() {
        return 0.0;
    }
    let sum: f64 = traj
        .states
        .iter()
        .map(|s| geom::point_polyline_distance((s.x, s.y), path).unwrap_or(0.0))
        .sum();
    sum / traj.states.len() as f64
}

/// Distance from the trajectory to the goal position.
pub fn cost_goal_distance(traj: &Trajectory, goal: (f64, f64), mode: GoalCostMode) -> f64 {
    match mode {
        GoalCostMode::FinalState => {
            traj.states.last().map_or(0.0, |s| geom::dist((s.x, s.y), goal))
        }
        GoalCostMode::MinOverTrajectory => traj
            .states
            .iter()
            .map(|s| geom::dist((s.x, s.y), goal))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Total distance traveled with negative body-forward speed.
pub fn cost_backward(traj: &Trajectory, dt: f64) -> f64 {
    traj.states.iter().skip(1).map(|s| (-s.v).max(0.0) * dt).sum()
}

/// Inverse clearance to the nearest untraversable cell. States on blocked
/// or out-of-map cells count as zero clearance.
pub fn cost_slope_traversability(
    traj: &Trajectory,
    trav: &TraversabilityGrid,
    config: &CostConfig,
) -> f64 {
    let clearance =
        |x: f64, y: f64| trav.distance_at(x, y).unwrap_or(0.0).min(config.d_cap);
    if config.st_sum_over_states {
        traj.states.iter().map(|s| 1.0 / (clearance(s.x, s.y) + config.d0)).sum()
    } else {
        let d_min =
            traj.states.iter().map(|s| clearance(s.x, s.y)).fold(f64::INFINITY, f64::min);
        1.0 / (d_min + config.d0)
    }
}

/// Summed footprint inclination angles and plane-fit residual deviations
/// along the trajectory (the initial state is not scored). Footprints with
/// fewer known cells than `support_threshold` contribute
/// `insufficient_penalty` to both sums.
pub fn cost_slope_roughness(
    traj: &Trajectory,
    grid: &ElevationGrid,
    footprint_radius: f64,
    insufficient_penalty: f64,
    support_fraction: f64,
) -> (f64, f64) {
    let min_cells = support_threshold(footprint_radius, grid.resolution(), support_fraction);
    let mut s_slope = 0.0;
    let mut s_rough = 0.0;
    for s in traj.states.iter().skip(1) {
        match terrain::footprint_plane(grid, s.x, s.y, footprint_radius, true) {
            Ok((fit, sigma)) if fit.point_count >= min_cells => {
                s_slope += terrain::slope_angle(&fit);
                s_rough += sigma.unwrap_or(0.0);
            }
            _ => {
                s_slope += insufficient_penalty;
                s_rough += insufficient_penalty;
            }
        }
    }
    (s_slope, s_rough)
}

/// Weighted power sum of component scores: `sum_i alpha_i * S_i^beta_i`.
pub fn total_cost(components: &[(f64, CostWeights)]) -> f64 {
    components.iter().map(|(s, w)| w.apply(*s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mppi::{ControlInput, RobotState, Trajectory};
    use approx::assert_relative_eq;

    fn traj_from_xy(points: &[(f64, f64)]) -> Trajectory {
        let states = points
            .iter()
            .map(|&(x, y)| RobotState { x, y, ..RobotState::default() })
            .collect();
        Trajectory { states, controls: vec![] }
    }

    #[test]
    fn path_distance_on_path_is_zero() {
        let path = [(0.0, 0.0), (5.0, 0.0)];
        let t = traj_from_xy(&[(0.0, 0.0), (1.0, 0.0), (3.5, 0.0)]);
        assert_relative_eq!(cost_path_distance(&t, &path), 0.0);
    }

    #[test]
    fn path_distance_constant_offset() {
        let path = [(0.0, 0.0), (5.0, 0.0)];
        let t = traj_from_xy(&[(0.5, 0.7), (2.0, 0.7), (4.0, 0.7)]);
        assert_relative_eq!(cost_path_distance(&t, &path), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn path_distance_point_to_segment() {
        let path = [(0.0, 0.0), (2.0, 0.0)];
        let t = traj_from_xy(&[(1.0, 1.0)]);
        assert_relative_eq!(cost_path_distance(&t, &path), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn goal_distance_modes() {
        let t = traj_from_xy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_relative_eq!(cost_goal_distance(&t, (2.0, 0.0), GoalCostMode::FinalState), 0.0);
        assert_relative_eq!(cost_goal_distance(&t, (4.0, 0.0), GoalCostMode::FinalState), 2.0);
        // The min variant matches a brute-force scan over all states.
        let goal = (0.9, 0.4);
        let brute = t
            .states
            .iter()
            .map(|s| crate::geom::dist((s.x, s.y), goal))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(
            cost_goal_distance(&t, goal, GoalCostMode::MinOverTrajectory),
            brute,
            epsilon = 1e-12
        );
    }

    #[test]
    fn backward_cost_definition() {
        let mut t = traj_from_xy(&[(0.0, 0.0); 11]);
        for s in t.states.iter_mut().skip(1) {
            s.v = -0.5;
        }
        // 10 steps at -0.5 m/s and dt = 0.1 equal one second of reversing.
        assert_relative_eq!(cost_backward(&t, 0.1), 0.5, epsilon = 1e-12);
        for s in t.states.iter_mut() {
            s.v = 0.3;
        }
        assert_relative_eq!(cost_backward(&t, 0.1), 0.0);
    }

    #[test]
    fn backward_cost_mixed_signs_matches_brute_force() {
        let mut t = traj_from_xy(&[(0.0, 0.0); 8]);
        let vs = [0.2, -0.1, 0.4, -0.3, 0.0, -0.2, 0.5];
        for (s, v) in t.states.iter_mut().skip(1).zip(vs) {
            s.v = v;
        }
        let brute: f64 = vs.iter().filter(|v| **v < 0.0).map(|v| -v * 0.1).sum();
        assert_relative_eq!(cost_backward(&t, 0.1), brute, epsilon = 1e-12);
    }

    #[test]
    fn total_cost_cases() {
        let w = CostWeights::new(1.0, 1.0);
        assert_relative_eq!(total_cost(&[(2.5, w)]), 2.5);
        // 3 * 2^2 + 1 * 1 = 13.
        assert_relative_eq!(
            total_cost(&[(2.0, CostWeights::new(3.0, 2.0)), (1.0, CostWeights::new(1.0, 1.0))]),
            13.0
        );
        assert_relative_eq!(
            total_cost(&[(5.0, CostWeights::new(0.0, 2.0)), (7.0, CostWeights::new(0.0, 1.0))]),
            0.0
        );
    }

    #[test]
    fn total_cost_monotone_in_scores() {
        let comps = |s: f64| {
            [
                (s, CostWeights::new(1.5, 2.0)),
                (1.0, CostWeights::new(0.7, 1.0)),
            ]
        };
        let mut prev = total_cost(&comps(0.0));
        for k in 1..20 {
            let cur = total_cost(&comps(k as f64 * 0.3));
            assert!(cur >= prev);
            prev = cur;
        }
    }
}
