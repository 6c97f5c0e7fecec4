//! Flight-cost model, budgets and the four measurement planners.

mod coverage;
mod frontier;
mod horizon;
mod image;

use serde::{Deserialize, Serialize};

pub use coverage::{coverage_spacing_m, plan_coverage};
pub use frontier::{frontier_candidates, plan_frontier};
pub use horizon::{candidate_grid, greedy_grid_search, path_objective, refine_path_cmaes, HorizonConfig};
pub use image::{plan_image_based, Edge};

use crate::bayes::PredictiveOutput;
use crate::error::{Error, Result};
use crate::mapping::BeliefMaps;
use crate::seed::{self, SimRng};
use crate::terrain::{footprint_cells, CameraConfig, CellRect, Pose, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionModel {
    /// Acceleration and deceleration magnitude, m/s².
    pub accel: f64,
    /// Maximum speed, m/s.
    pub max_speed: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self { accel: 2.0, max_speed: 2.0 }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.accel > 0.0 && self.accel.is_finite() && self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "motion model needs positive accel and max_speed, got {} and {}",
                self.accel, self.max_speed
            )));
        }
        Ok(())
    }

    /// Rest-to-rest time over a straight segment of length `d`.
    pub fn time_for_distance(&self, d: f64) -> f64 {
        let (a, v) = (self.accel, self.max_speed);
        if d <= 0.0 {
            0.0
        } else if d >= v * v / a {
            d / v + v / a
        } else {
            2.0 * (d / a).sqrt()
        }
    }
}

/// Flight time between two poses under the trapezoidal/triangular velocity profile.
pub fn flight_time(a: &Pose, b: &Pose, motion: &MotionModel) -> f64 {
    motion.time_for_distance(a.distance(b))
}

/// Ordered measurement positions with their accumulated flight time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub positions: Vec<Pose>,
    pub cost_s: f64,
}

impl Path {
    pub fn new(positions: Vec<Pose>, motion: &MotionModel) -> Self {
        let cost_s = positions.windows(2).map(|w| flight_time(&w[0], &w[1], motion)).sum();
        Self { positions, cost_s }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Longest prefix whose cost stays within `budget_s`.
    pub fn truncate_to_budget(&self, budget_s: f64, motion: &MotionModel) -> Path {
        let mut kept = Vec::new();
        let mut cost = 0.0;
        for (i, p) in self.positions.iter().enumerate() {
            if i > 0 {
                let leg = flight_time(&self.positions[i - 1], p, motion);
                if cost + leg > budget_s {
                    break;
                }
                cost += leg;
            }
            kept.push(*p);
        }
        Path { positions: kept, cost_s: cost }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub total_s: f64,
    pub spent_s: f64,
}

impl Budget {
    pub fn new(total_s: f64) -> Self {
        Self { total_s, spent_s: 0.0 }
    }

    pub fn remaining_s(&self) -> f64 {
        self.total_s - self.spent_s
    }

    pub fn can_afford(&self, cost_s: f64) -> bool {
        self.spent_s + cost_s <= self.total_s
    }

    pub fn charge(&mut self, cost_s: f64) -> Result<()> {
        if !self.can_afford(cost_s) {
            return Err(Error::InvalidArgument(format!(
                "leg of {cost_s} s exceeds the remaining budget of {} s",
                self.remaining_s()
            )));
        }
        self.spent_s += cost_s;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Coverage,
    Image,
    Frontier,
    FixedHorizon,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] =
        [PlannerKind::Coverage, PlannerKind::Image, PlannerKind::Frontier, PlannerKind::FixedHorizon];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Coverage => "coverage",
            PlannerKind::Image => "image",
            PlannerKind::Frontier => "frontier",
            PlannerKind::FixedHorizon => "fixed_horizon",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown planner '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    /// Image-based step length, m.
    #[serde(default = "default_step_m")]
    pub step_m: f64,
    /// Image-based edge strip width, px.
    #[serde(default = "default_edge_px")]
    pub edge_px: usize,
    /// Frontier candidate spacing, m.
    #[serde(default = "default_sample_dist_m")]
    pub sample_dist_m: f64,
    /// Shortest allowed leg as a fraction of the footprint side.
    #[serde(default = "default_min_leg_fraction")]
    pub min_leg_fraction: f64,
    #[serde(default)]
    pub fixed_horizon: HorizonConfig,
}

fn default_step_m() -> f64 {
    50.0
}
fn default_edge_px() -> usize {
    10
}
fn default_sample_dist_m() -> f64 {
    15.0
}
fn default_min_leg_fraction() -> f64 {
    0.1
}

impl PlannerConfig {
    pub fn new(kind: PlannerKind) -> Self {
        Self {
            kind,
            step_m: default_step_m(),
            edge_px: default_edge_px(),
            sample_dist_m: default_sample_dist_m(),
            min_leg_fraction: default_min_leg_fraction(),
            fixed_horizon: HorizonConfig::default(),
        }
    }
}

/// Shorter footprint side in meters.
pub fn footprint_side_m(camera: &CameraConfig, resolution_m: f64) -> f64 {
    let (c, r) = camera.footprint_cells_dims(resolution_m);
    c.min(r) as f64 * resolution_m
}

/// Footprint of a pose already known to lie in the workspace.
pub(crate) fn footprint_in(ws: &Workspace, camera: &CameraConfig, pose: &Pose) -> CellRect {
    footprint_cells(camera, pose, &ws.geometry).expect("workspace poses keep the footprint in bounds")
}

/// Picks a uniformly random workspace pose at least `min_leg` away from `from`.
pub(crate) fn random_pose(ws: &Workspace, from: &Pose, min_leg: f64, rng: &mut SimRng) -> Pose {
    let mut p = ws.sample(rng);
    for _ in 0..64 {
        if p.distance(from) >= min_leg {
            break;
        }
        p = ws.sample(rng);
    }
    p
}

/// Per-mission planner state: dispatches to the configured planner and tracks
/// the coverage queue and pending horizon steps.
#[derive(Debug, Clone)]
pub struct Planner {
    pub config: PlannerConfig,
    pub workspace: Workspace,
    pub camera: CameraConfig,
    pub motion: MotionModel,
    pub mission_index: usize,
    rng: SimRng,
    coverage: Vec<Pose>,
    cursor: usize,
    pending: Vec<Pose>,
}

impl Planner {
    pub fn new(
        config: PlannerConfig,
        workspace: Workspace,
        camera: CameraConfig,
        motion: MotionModel,
        mission_index: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        motion.validate()?;
        let coverage = if config.kind == PlannerKind::Coverage {
            plan_coverage(mission_index, &workspace, &camera, &motion, f64::INFINITY)?.positions
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            workspace,
            camera,
            motion,
            mission_index,
            rng: seed::rng(rng_seed),
            coverage,
            cursor: 0,
            pending: Vec::new(),
        })
    }

    pub fn min_leg_m(&self) -> f64 {
        self.config.min_leg_fraction * footprint_side_m(&self.camera, self.workspace.geometry.resolution_m)
    }

    /// Mission start pose: the first lawnmower waypoint for coverage, the
    /// workspace corner closest to the origin otherwise.
    pub fn start_pose(&self) -> Pose {
        match self.coverage.first() {
            Some(p) => *p,
            None => Pose::new(self.workspace.x_min, self.workspace.y_min, self.workspace.altitude_m),
        }
    }

    /// Next measurement position, or `None` once the budget cannot pay for
    /// the leg to it (mission complete).
    pub fn next_measurement(
        &mut self,
        maps: &BeliefMaps,
        current: &Pose,
        last: Option<(&PredictiveOutput, &CellRect)>,
        budget: &Budget,
    ) -> Result<Option<Pose>> {
        let next = match self.config.kind {
            PlannerKind::Coverage => {
                self.cursor += 1;
                match self.coverage.get(self.cursor) {
                    Some(p) => *p,
                    None => return Ok(None),
                }
            }
            PlannerKind::Image => {
                let min_leg = self.min_leg_m();
                plan_image_based(
                    last,
                    maps,
                    current,
                    self.config.step_m,
                    self.config.edge_px,
                    &self.camera,
                    &self.workspace,
                    min_leg,
                    &mut self.rng,
                )
            }
            PlannerKind::Frontier => {
                let min_leg = self.min_leg_m();
                plan_frontier(
                    maps,
                    current,
                    &self.camera,
                    &self.workspace,
                    self.config.sample_dist_m,
                    min_leg,
                    &mut self.rng,
                )
            }
            PlannerKind::FixedHorizon => {
                if self.pending.is_empty() {
                    self.pending = self.plan_horizon(maps, current)?;
                    self.pending.reverse();
                }
                let p = self.pending.pop().expect("horizon plans at least one step");
                if !self.config.fixed_horizon.execute_full_horizon {
                    self.pending.clear();
                }
                p
            }
        };
        if budget.can_afford(flight_time(current, &next, &self.motion)) {
            Ok(Some(next))
        } else {
            Ok(None)
        }
    }

    fn plan_horizon(&mut self, maps: &BeliefMaps, current: &Pose) -> Result<Vec<Pose>> {
        let seed = self.rng_seed_for_refinement();
        let cfg = &self.config.fixed_horizon;
        let res = self.workspace.geometry.resolution_m;
        let spacing = cfg.grid_spacing_m.unwrap_or_else(|| footprint_side_m(&self.camera, res));
        let candidates = candidate_grid(&self.workspace, spacing);
        let min_leg = self.min_leg_m();
        let greedy = greedy_grid_search(maps, &self.camera, current, cfg.horizon, &candidates, &self.motion, min_leg)?;
        if greedy.positions.len() < 2 {
            let mut rng = seed::rng(seed);
            return Ok(vec![random_pose(&self.workspace, current, min_leg, &mut rng)]);
        }
        let refined =
            refine_path_cmaes(maps, &greedy, &self.camera, &self.workspace, &self.motion, min_leg, cfg, seed)?;
        let mut steps = refined.positions[1..].to_vec();
        if steps[0].distance(current) < min_leg {
            steps = greedy.positions[1..].to_vec();
        }
        Ok(steps)
    }

    fn rng_seed_for_refinement(&mut self) -> u64 {
        use rand::Rng;
        self.rng.random()
    }
}
