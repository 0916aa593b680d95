//! Sampling-based local path follower.
//!
//! Each control step perturbs a nominal acceleration sequence with Gaussian
//! noise (one counter-seeded RNG stream per sample, so evaluation order is
//! irrelevant), rolls every candidate out through the terrain-aware
//! kinematic model, scores the trajectories, and blends the candidates with
//! softmax weights into the next nominal sequence. The first blended
//! control is applied; the rest warm-starts the next step.
//!
//! The Slope-Traversability variant derives its traversability layers from
//! the elevation snapshot inside the control step — the controller cannot
//! assume the snapshot it is handed is the one the 1 Hz planner binarized.
//! That rebuild dominates its step time. The Slope-Roughness variant only
//! touches the cells under the rolled-out footprints, which is why its
//! steps are cheaper on map sizes where a full-grid pass is expensive.

mod cost;

pub use cost::{
    cost_backward, cost_goal_distance, cost_path_distance, cost_slope_roughness,
    cost_slope_traversability, cost_tip_hazard, support_threshold, total_cost, CostConfig,
    CostVariant, CostWeights, GoalCostMode,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{self, normalize_angle};
use crate::grid::ElevationGrid;
use crate::terrain::{self, TraversabilityConfig};

/// Planar robot state with terrain-derived z/roll/pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Signed body-forward speed, m/s.
    pub v: f64,
    /// Yaw rate, rad/s.
    pub w: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw, ..Default::default() }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Commanded linear and angular acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ControlInput {
    pub linear_accel: f64,
    pub angular_accel: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { linear_accel: 0.0, angular_accel: 0.0 };
}

/// Velocity and acceleration envelopes of the platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicLimits {
    pub v_max: f64,
    pub w_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self { v_max: 0.5, w_max: 1.3, a_max: 1.0, alpha_max: 3.0 }
    }
}

/// Elevation source for terrain-aware rollouts. The pose radius is the
/// wheel-support disk that seats the body on the terrain; the footprint
/// radius is the larger patch the terrain costs inspect.
#[derive(Clone, Copy)]
pub struct TerrainContext<'a> {
    pub grid: &'a ElevationGrid,
    pub footprint_radius: f64,
    pub pose_radius: f64,
}

/// A rolled-out trajectory: `states[k+1] = dynamics_step(states[k],
/// controls[k], ..)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<RobotState>,
    pub controls: Vec<ControlInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiConfig {
    /// Number of sampled control sequences per step.
    pub samples: usize,
    /// Rollout horizon in steps.
    pub horizon: usize,
    /// Rollout and control period, seconds.
    pub dt: f64,
    /// Noise applied to the linear acceleration channel, m/s^2.
    pub sigma_linear: f64,
    /// Noise applied to the angular acceleration channel, rad/s^2.
    pub sigma_angular: f64,
    /// Softmax temperature.
    pub temperature: f64,
    pub limits: KinematicLimits,
    /// Footprint radius of the terrain cost patches.
    pub footprint_radius: f64,
    /// Wheel-support radius that seats the body on the terrain.
    pub pose_radius: f64,
    pub cost: CostConfig,
    /// Traversability parameters for the Slope-Traversability variant's
    /// in-step derivation.
    pub traversability: TraversabilityConfig,
    pub seed: u64,
    /// Evaluate rollouts on the rayon pool. Results are identical either
    /// way; the blend is reduced in sample order.
    pub parallel: bool,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            samples: 300,
            horizon: 30,
            dt: 0.1,
            sigma_linear: 0.5,
            sigma_angular: 1.5,
            temperature: 0.5,
            limits: KinematicLimits::default(),
            footprint_radius: 0.3,
            pose_radius: 0.12,
            cost: CostConfig::default(),
            traversability: TraversabilityConfig::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples == 0 || self.horizon == 0 {
            return Err("samples and horizon must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return Err("temperature must be positive".into());
        }
        if self.sigma_linear < 0.0 || self.sigma_angular < 0.0 {
            return Err("noise deviations cannot be negative".into());
        }
        self.traversability.validate()
    }
}

/// One integration step of the terrain-following unicycle: clamp the
/// accelerated velocities, advance the pose, then re-seat z/roll/pitch on
/// the footprint plane fit at the new position (carried over unchanged when
/// terrain is absent or unsupported there).
pub fn dynamics_step(
    state: &RobotState,
    u: ControlInput,
    dt: f64,
    limits: &KinematicLimits,
    terrain: Option<&TerrainContext>,
) -> RobotState {
    let mut next = kinematic_step(state, u, dt, limits);
    if let Some(t) = terrain {
        if let Ok((fit, _)) = terrain::footprint_plane(t.grid, next.x, next.y, t.pose_radius, false)
        {
            let (z, roll, pitch) = terrain::pose_on_plane(&fit, next.x, next.y, next.yaw);
            next.z = z;
            next.roll = roll;
            next.pitch = pitch;
        }
    }
    next
}

#[inline]
fn kinematic_step(state: &RobotState, u: ControlInput, dt: f64, limits: &KinematicLimits) -> RobotState {
    let v = (state.v + u.linear_accel * dt).clamp(-limits.v_max, limits.v_max);
    let w = (state.w + u.angular_accel * dt).clamp(-limits.w_max, limits.w_max);
    let yaw = normalize_angle(state.yaw + w * dt);
    RobotState {
        x: state.x + v * yaw.cos() * dt,
        y: state.y + v * yaw.sin() * dt,
        z: state.z,
        roll: state.roll,
        pitch: state.pitch,
        yaw,
        v,
        w,
    }
}

/// Roll a control sequence out from `initial`.
pub fn rollout(
    initial: &RobotState,
    controls: &[ControlInput],
    dt: f64,
    limits: &KinematicLimits,
    terrain: Option<&TerrainContext>,
) -> Trajectory {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*initial);
    let mut s = *initial;
    for &u in controls {
        s = dynamics_step(&s, u, dt, limits, terrain);
        states.push(s);
    }
    Trajectory { states, controls: controls.to_vec() }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for sample `k` of control step `step_index`.
fn sample_seed(seed: u64, step_index: u64, k: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed).wrapping_add(step_index)).wrapping_add(k))
}

/// Perturb the nominal sequence into `samples` candidate sequences. Each
/// sample draws from its own counter-seeded stream, so the set does not
/// depend on evaluation order, and runs twice with the same seed and step
/// index are identical.
pub fn sample_control_sequences(
    nominal: &[ControlInput],
    config: &MppiConfig,
    step_index: u64,
) -> Vec<Vec<ControlInput>> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let lim = &config.limits;
    let clamp = |u: ControlInput| ControlInput {
        linear_accel: u.linear_accel.clamp(-lim.a_max, lim.a_max),
        angular_accel: u.angular_accel.clamp(-lim.alpha_max, lim.alpha_max),
    };
    (0..config.samples)
        .map(|k| {
            if config.sigma_linear == 0.0 && config.sigma_angular == 0.0 {
                return nominal.iter().map(|&u| clamp(u)).collect();
            }
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(sample_seed(config.seed, step_index, k as u64));
            let noise_a = rand_distr::Normal::new(0.0, config.sigma_linear.max(1e-300)).unwrap();
            let noise_w = rand_distr::Normal::new(0.0, config.sigma_angular.max(1e-300)).unwrap();
            nominal
                .iter()
                .map(|u| {
                    clamp(ControlInput {
                        linear_accel: u.linear_accel
                            + if config.sigma_linear > 0.0 { noise_a.sample(&mut rng) } else { 0.0 },
                        angular_accel: u.angular_accel
                            + if config.sigma_angular > 0.0 { noise_w.sample(&mut rng) } else { 0.0 },
                    })
                })
                .collect()
        })
        .collect()
}

/// Normalized softmax weights of the cost vector. The minimum-cost shift
/// makes the weights exactly invariant to adding a constant to every cost.
pub fn softmax_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = costs.iter().map(|&c| (-(c - min) / temperature).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Raw per-component scores of one trajectory (before weights/exponents).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentBreakdown {
    pub path_distance: f64,
    pub goal_distance: f64,
    pub backward: f64,
    pub slope_traversability: f64,
    pub slope: f64,
    pub roughness: f64,
    pub tip_hazard: f64,
}

/// Per-step controller output diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step_index: u64,
    /// Wall time of the whole control step, milliseconds.
    pub wall_ms: f64,
    pub min_total_cost: f64,
    pub effective_sample_size: f64,
    /// All candidates were fully penalized; a braking control was returned.
    pub degenerate: bool,
    /// Softmax-weighted mean of the raw component scores.
    pub weighted_components: ComponentBreakdown,
    pub weights: Vec<f64>,
    pub sample_costs: Vec<f64>,
}

struct SampleEval {
    total: f64,
    comps: ComponentBreakdown,
    fully_penalized: bool,
}

/// The MPPI local controller. One instance drives one robot; feed it the
/// freshest elevation snapshot, reference path and goal every step.
#[derive(Debug, Clone)]
pub struct MppiController {
    config: MppiConfig,
    nominal: Vec<ControlInput>,
    step_index: u64,
}

impl MppiController {
    pub fn new(config: MppiConfig) -> Result<Self, String> {
        config.validate()?;
        let nominal = vec![ControlInput::ZERO; config.horizon];
        Ok(Self { config, nominal, step_index: 0 })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn nominal(&self) -> &[ControlInput] {
        &self.nominal
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Reset the warm start and the step counter.
    pub fn reset(&mut self) {
        self.nominal = vec![ControlInput::ZERO; self.config.horizon];
        self.step_index = 0;
    }

    /// Run one control step: sample, roll out, score, blend. Returns the
    /// control to apply now plus diagnostics.
    pub fn step(
        &mut self,
        state: &RobotState,
        grid: Option<&ElevationGrid>,
        path: &[(f64, f64)],
        goal: (f64, f64),
    ) -> (ControlInput, StepDiagnostics) {
        let t0 = std::time::Instant::now();
        let cfg = &self.config;
        let use_st = cfg.cost.variant == CostVariant::SlopeTraversability
            && cfg.cost.slope_traversability.alpha > 0.0;
        // The ST variant re-derives its traversability layers from the
        // snapshot every step; see the module docs.
        let trav = match (use_st, grid) {
            (true, Some(g)) => Some(terrain::build_traversability(g, &cfg.traversability)),
            _ => None,
        };
        let terrain_ctx = grid.map(|g| TerrainContext {
            grid: g,
            footprint_radius: cfg.footprint_radius,
            pose_radius: cfg.pose_radius,
        });

        let sequences = sample_control_sequences(&self.nominal, cfg, self.step_index);
        let evaluate = |seq: &Vec<ControlInput>| -> SampleEval {
            self.evaluate_sequence(state, seq, terrain_ctx.as_ref(), trav.as_ref(), path, goal)
        };
        let evals: Vec<SampleEval> = if cfg.parallel {
            sequences.par_iter().map(evaluate).collect()
        } else {
            sequences.iter().map(evaluate).collect()
        };

        let costs: Vec<f64> = evals.iter().map(|e| e.total).collect();
        let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let weights = softmax_weights(&costs, cfg.temperature);
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let degenerate = evals.iter().all(|e| e.fully_penalized);
        let (u0, new_nominal) = if degenerate {
            let dt = cfg.dt;
            let brake = ControlInput {
                linear_accel: (-state.v / dt).clamp(-cfg.limits.a_max, cfg.limits.a_max),
                angular_accel: (-state.w / dt).clamp(-cfg.limits.alpha_max, cfg.limits.alpha_max),
            };
            (brake, vec![ControlInput::ZERO; cfg.horizon])
        } else if cfg.sigma_linear == 0.0 && cfg.sigma_angular == 0.0 {
            // All candidates equal the nominal; the blend is the nominal
            // itself, kept exact rather than re-summed.
            let blended = sequences[0].clone();
            let u0 = blended[0];
            let mut shifted: Vec<ControlInput> = blended[1..].to_vec();
            shifted.push(ControlInput::ZERO);
            (u0, shifted)
        } else {
            // Blend in fixed sample order so parallel and serial runs agree
            // bit for bit.
            let mut blended = vec![ControlInput::ZERO; cfg.horizon];
            for (k, seq) in sequences.iter().enumerate() {
                let w = weights[k];
                for (b, u) in blended.iter_mut().zip(seq) {
                    b.linear_accel += w * u.linear_accel;
                    b.angular_accel += w * u.angular_accel;
                }
            }
            let u0 = blended[0];
            // Shift for the warm start, padding with zero acceleration.
            let mut shifted: Vec<ControlInput> = blended[1..].to_vec();
            shifted.push(ControlInput::ZERO);
            (u0, shifted)
        };
        self.nominal = new_nominal;

        let mut weighted = ComponentBreakdown::default();
        for (k, e) in evals.iter().enumerate() {
            let w = weights[k];
            weighted.path_distance += w * e.comps.path_distance;
            weighted.goal_distance += w * e.comps.goal_distance;
            weighted.backward += w * e.comps.backward;
            weighted.slope_traversability += w * e.comps.slope_traversability;
            weighted.slope += w * e.comps.slope;
            weighted.roughness += w * e.comps.roughness;
            weighted.tip_hazard += w * e.comps.tip_hazard;
        }

        let diag = StepDiagnostics {
            step_index: self.step_index,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            min_total_cost: min_cost,
            effective_sample_size: ess,
            degenerate,
            weighted_components: weighted,
            weights,
            sample_costs: costs,
        };
        self.step_index += 1;
        (u0, diag)
    }

    /// Roll a sequence out and accumulate every enabled cost component in
    /// one pass. Matches the compositional `cost_*` functions exactly.
    fn evaluate_sequence(
        &self,
        initial: &RobotState,
        seq: &[ControlInput],
        terrain: Option<&TerrainContext>,
        trav: Option<&crate::terrain::TraversabilityGrid>,
        path: &[(f64, f64)],
        goal: (f64, f64),
    ) -> SampleEval {
        let cfg = &self.config;
        let cc = &cfg.cost;
        let want_path = cc.path_distance.alpha > 0.0 && !path.is_empty();
        let want_goal = cc.goal_distance.alpha > 0.0;
        let want_back = cc.backward.alpha > 0.0;
        let want_st = trav.is_some();
        let want_sr = cc.variant == CostVariant::SlopeRoughness
            && (cc.slope.alpha > 0.0 || cc.roughness.alpha > 0.0);
        let min_support = terrain.map(|t| {
            cost::support_threshold(t.footprint_radius, t.grid.resolution(), cc.support_fraction)
        });

        let mut comps = ComponentBreakdown::default();
        let mut path_sum = 0.0;
        let mut goal_min = f64::INFINITY;
        let mut st_min = f64::INFINITY;
        let mut st_max = 0.0f64;
        let mut st_sum = 0.0;
        let mut sr_unsupported = 0usize;

        let mut account_state = |s: &RobotState, is_initial: bool| {
            if want_path {
                path_sum += geom::point_polyline_distance((s.x, s.y), path).unwrap_or(0.0);
            }
            if want_goal {
                goal_min = goal_min.min(geom::dist((s.x, s.y), goal));
            }
            if let Some(t) = trav {
                let d = t.distance_at(s.x, s.y).unwrap_or(0.0).min(cc.d_cap);
                st_min = st_min.min(d);
                st_max = st_max.max(d);
                st_sum += 1.0 / (d + cc.d0);
            }
            if want_back && !is_initial {
                comps.backward += (-s.v).max(0.0) * cfg.dt;
            }
        };
        let want_tip = cc.tip_hazard.alpha > 0.0 && terrain.is_some();

        account_state(initial, true);
        let mut s = *initial;
        let mut final_state = s;
        for &u in seq {
            s = kinematic_step(&s, u, cfg.dt, &cfg.limits);
            if let Some(t) = terrain {
                if let Ok((fit, _)) =
                    terrain::footprint_plane(t.grid, s.x, s.y, t.pose_radius, false)
                {
                    let (z, roll, pitch) = terrain::pose_on_plane(&fit, s.x, s.y, s.yaw);
                    s.z = z;
                    s.roll = roll;
                    s.pitch = pitch;
                }
                if want_sr {
                    match terrain::footprint_plane(t.grid, s.x, s.y, t.footprint_radius, true) {
                        Ok((fit, sigma)) if fit.point_count >= min_support.unwrap_or(3) => {
                            comps.slope += terrain::slope_angle(&fit);
                            comps.roughness += sigma.unwrap_or(0.0);
                        }
                        _ => {
                            comps.slope += cc.insufficient_penalty;
                            comps.roughness += cc.insufficient_penalty;
                            sr_unsupported += 1;
                        }
                    }
                }
            }
            if want_tip {
                comps.tip_hazard +=
                    (s.roll.abs().max(s.pitch.abs()) - cc.tip_margin).max(0.0);
            }
            account_state(&s, false);
            final_state = s;
        }

        let n_states = (seq.len() + 1) as f64;
        comps.path_distance = if want_path { path_sum / n_states } else { 0.0 };
        comps.goal_distance = if want_goal {
            match cc.goal_mode {
                GoalCostMode::FinalState => geom::dist((final_state.x, final_state.y), goal),
                GoalCostMode::MinOverTrajectory => goal_min,
            }
        } else {
            0.0
        };
        comps.slope_traversability = if want_st {
            if cc.st_sum_over_states {
                st_sum
            } else {
                1.0 / (st_min + cc.d0)
            }
        } else {
            0.0
        };

        let total = total_cost(&[
            (comps.path_distance, cc.path_distance),
            (comps.goal_distance, cc.goal_distance),
            (comps.backward, cc.backward),
            (comps.slope_traversability, cc.slope_traversability),
            (comps.slope, cc.slope),
            (comps.roughness, cc.roughness),
            (comps.tip_hazard, cc.tip_hazard),
        ]);
        // A sample is written off only when no state of it has any
        // clearance (or footprint support) at all; merely poking the
        // horizon into blocked or unmapped ground still leaves the other
        // components to discriminate.
        let fully_penalized = if want_st {
            st_max <= 0.0
        } else if want_sr {
            sr_unsupported == seq.len()
        } else {
            false
        };
        SampleEval { total, comps, fully_penalized }
    }
}
