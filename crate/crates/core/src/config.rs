//! Experiment configuration: TOML schema, defaults and cross-field checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::{Architecture, TrainConfig};
use crate::error::{Error, Result};
use crate::mapping::MappingConfig;
use crate::planning::{footprint_side_m, MotionModel, PlannerConfig};
use crate::seed;
use crate::terrain::{CameraConfig, CellRect, GridGeometry, Pose, TerrainParams, Workspace, MIN_SIDE_CELLS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSection {
    pub width_cells: usize,
    pub height_cells: usize,
    pub num_classes: usize,
    pub blob_scale: f64,
    #[serde(default = "default_resolution")]
    pub resolution_m: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_separation")]
    pub prototype_separation: f64,
    #[serde(default = "default_decay")]
    pub class_decay: f64,
    #[serde(default)]
    pub region_variation: f64,
    /// Terrain seed; derived from the experiment seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_resolution() -> f64 {
    1.0
}
fn default_feature_dim() -> usize {
    3
}
fn default_separation() -> f64 {
    0.35
}
fn default_decay() -> f64 {
    1.0
}

impl TerrainSection {
    pub fn params(&self, master_seed: u64) -> TerrainParams {
        TerrainParams {
            seed: self.seed.unwrap_or_else(|| seed::derive(master_seed, seed::stream::TERRAIN, 0)),
            width_cells: self.width_cells,
            height_cells: self.height_cells,
            num_classes: self.num_classes,
            blob_scale: self.blob_scale,
            resolution_m: self.resolution_m,
            feature_dim: self.feature_dim,
            prototype_separation: self.prototype_separation,
            class_decay: self.class_decay,
            region_variation: self.region_variation,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry { width: self.width_cells, height: self.height_cells, resolution_m: self.resolution_m }
    }
}

/// Column split of the terrain along x: mission area, seed strip, test strip.
/// Each strip spans the full height.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission_width_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_width_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_width_cells: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Areas {
    pub mission: CellRect,
    pub seed: CellRect,
    pub test: CellRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { window: 3, hidden: 16, dropout: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// MC dropout samples T for prediction and evaluation.
    pub mc_samples: usize,
    pub ece_bins: usize,
    /// Labelled seed images used to pretrain the checkpoint.
    pub seed_images: usize,
    /// Spacing of the test pose grid, m; one footprint side when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_spacing_m: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mc_samples: 20, ece_bins: 10, seed_images: 5, test_spacing_m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub num_missions: usize,
    /// Flight budget per mission, s.
    pub budget_s: f64,
    /// Mission start position; the mission workspace corner when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_xy: Option<[f64; 2]>,
    pub terrain: TerrainSection,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub motion: MotionModel,
    pub planner: PlannerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub mapping: MappingConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            feature_dim: self.terrain.feature_dim,
            window: self.model.window,
            hidden: self.model.hidden,
            num_classes: self.terrain.num_classes,
        }
    }

    /// Strip widths, filling unset ones: test = W/4, seed = W/8, mission = rest.
    pub fn areas(&self) -> Areas {
        let w = self.terrain.width_cells;
        let h = self.terrain.height_cells;
        let test = self.layout.test_width_cells.unwrap_or(w / 4);
        let seed_w = self.layout.seed_width_cells.unwrap_or(w / 8);
        let mission = self.layout.mission_width_cells.unwrap_or(w.saturating_sub(test + seed_w));
        Areas {
            mission: CellRect::new(0, 0, mission, h),
            seed: CellRect::new(mission, 0, seed_w, h),
            test: CellRect::new(mission + seed_w, 0, test, h),
        }
    }

    pub fn mission_workspace(&self) -> Result<Workspace> {
        Workspace::new(&self.terrain.geometry(), &self.camera, &self.areas().mission)
    }

    pub fn start_pose(&self) -> Result<Pose> {
        let ws = self.mission_workspace()?;
        Ok(match self.start_xy {
            Some([x, y]) => Pose::new(x, y, self.camera.altitude_m),
            None => Pose::new(ws.x_min, ws.y_min, self.camera.altitude_m),
        })
    }

    /// Copy with every derived default written out explicitly.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let a = self.areas();
        c.layout = LayoutConfig {
            mission_width_cells: Some(a.mission.cols),
            seed_width_cells: Some(a.seed.cols),
            test_width_cells: Some(a.test.cols),
        };
        c.terrain.seed = Some(self.terrain.params(self.seed).seed);
        if let Ok(p) = self.start_pose() {
            c.start_xy = Some([p.x, p.y]);
        }
        c
    }

    /// Every violated constraint, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let t = &self.terrain;
        if !(self.budget_s > 0.0 && self.budget_s.is_finite()) {
            v.push(format!("budget_s must be positive, got {}", self.budget_s));
        }
        if t.num_classes < 2 {
            v.push("terrain.num_classes must be at least 2".into());
        }
        if t.width_cells < MIN_SIDE_CELLS || t.height_cells < MIN_SIDE_CELLS {
            v.push(format!("terrain sides must be at least {MIN_SIDE_CELLS} cells"));
        }
        if !(t.blob_scale > 0.0) {
            v.push("terrain.blob_scale must be positive".into());
        }
        if !(t.resolution_m > 0.0) {
            v.push("terrain.resolution_m must be positive".into());
        }
        if t.feature_dim == 0 {
            v.push("terrain.feature_dim must be at least 1".into());
        }
        if !(t.class_decay > 0.0) {
            v.push("terrain.class_decay must be positive".into());
        }
        if !(t.region_variation >= 0.0) || !t.region_variation.is_finite() {
            v.push("terrain.region_variation must be finite and non-negative".into());
        }
        if let Err(e) = self.camera.check_against(t.resolution_m) {
            v.push(format!("camera: {e}"));
        }
        if let Err(e) = self.motion.validate() {
            v.push(format!("motion: {e}"));
        }
        let m = &self.mapping;
        if !(m.prior_var > 0.0 && m.prior_var <= 1.0) {
            v.push(format!("mapping.prior_var (ε) must lie in (0, 1], got {}", m.prior_var));
        }
        if !(0.0..=1.0).contains(&m.u_prior) {
            v.push(format!("mapping.u_prior must lie in [0, 1], got {}", m.u_prior));
        }
        if !(m.r_min > 0.0) {
            v.push("mapping.r_min must be positive".into());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            v.push(format!("model.dropout (p) must lie in [0, 1), got {}", self.model.dropout));
        }
        if self.model.window.is_multiple_of(2) {
            v.push(format!("model.window must be odd, got {}", self.model.window));
        }
        if self.model.hidden == 0 {
            v.push("model.hidden must be at least 1".into());
        }
        let e = &self.evaluation;
        if e.mc_samples == 0 {
            v.push("evaluation.mc_samples must be at least 1".into());
        }
        if e.ece_bins < 2 {
            v.push("evaluation.ece_bins must be at least 2".into());
        }
        if e.seed_images == 0 {
            v.push("evaluation.seed_images must be at least 1".into());
        }
        let tr = &self.training;
        if tr.batch_size == 0 || tr.pixels_per_image == 0 || tr.max_epochs == 0 || !(tr.learning_rate > 0.0) {
            v.push("training: max_epochs, batch_size, pixels_per_image and learning_rate must be positive".into());
        }
        let p = &self.planner;
        if !(p.step_m > 0.0) || p.edge_px == 0 || !(p.sample_dist_m > 0.0) {
            v.push("planner: step_m, edge_px and sample_dist_m must be positive".into());
        }
        if !(p.min_leg_fraction > 0.0) {
            v.push("planner.min_leg_fraction must be positive".into());
        }
        if p.fixed_horizon.horizon == 0 {
            v.push("planner.fixed_horizon.horizon must be at least 1".into());
        }
        if let Some(s) = p.fixed_horizon.grid_spacing_m {
            if !(s > 0.0) {
                v.push("planner.fixed_horizon.grid_spacing_m must be positive".into());
            }
        }

        // Geometry: footprint against terrain and strips.
        if t.resolution_m > 0.0 && self.camera.gsd_m > 0.0 {
            let (fc, fr) = self.camera.footprint_cells_dims(t.resolution_m);
            if fc == 0 || fr == 0 {
                v.push("camera footprint is smaller than one cell".into());
            } else if fc > t.width_cells || fr > t.height_cells {
                v.push(format!(
                    "camera footprint of {fc}x{fr} cells exceeds the {}x{} terrain",
                    t.width_cells, t.height_cells
                ));
            } else {
                let a = self.areas();
                if a.mission.col_end() + a.seed.cols + a.test.cols > t.width_cells {
                    v.push("layout widths exceed the terrain width".into());
                }
                for (name, r) in [("mission", a.mission), ("seed", a.seed), ("test", a.test)] {
                    if r.cols < fc || r.rows < fr {
                        v.push(format!("{name} strip of {} cells is narrower than the {fc}-cell footprint", r.cols));
                    }
                }
                if v.is_empty() {
                    let side = footprint_side_m(&self.camera, t.resolution_m);
                    let leg = self.motion.time_for_distance(side);
                    if !(self.budget_s > leg) {
                        v.push(format!("budget_s {} does not exceed one footprint-side leg of {leg:.3} s", self.budget_s));
                    }
                    if let (Some([x, y]), Ok(ws)) = (self.start_xy, self.mission_workspace()) {
                        if !ws.contains(&Pose::new(x, y, self.camera.altitude_m)) {
                            v.push(format!(
                                "start_xy ({x}, {y}) is outside the mission workspace [{}, {}] x [{}, {}]",
                                ws.x_min, ws.x_max, ws.y_min, ws.y_max
                            ));
                        }
                    }
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("\n")))
        }
    }
}
