//! Experiment pipeline: seed pretraining, budgeted data-collection missions,
//! oracle labelling, retraining from the checkpoint and evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    evaluate, predict_mc, reset_to_checkpoint, save_checkpoint, train, weight_decay_for, Metrics, ModelState, TrainSet,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::export::{
    default_scale, overlay_path, render_labels, render_semantic_map, render_uncertainty_map, save_png, GridFile,
};
use crate::mapping::{project_prediction, BeliefMaps, MappingConfig};
use crate::planning::{candidate_grid, flight_time, footprint_side_m, Budget, Planner};
use crate::seed::{self, stream};
use crate::terrain::{capture_image, generate_synthetic_terrain, CameraConfig, ImageSample, Pose, TerrainRaster, Workspace};

/// One executed capture: cumulative flight time, position and the leg flown to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub leg_cost: f64,
}

impl CaptureRecord {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionOutcome {
    pub images: Vec<ImageSample>,
    pub captures: Vec<CaptureRecord>,
    pub spent_s: f64,
}

/// World, sensor and mapping settings shared by all missions of a run.
#[derive(Debug, Clone, Copy)]
pub struct MissionContext<'a> {
    pub raster: &'a TerrainRaster,
    pub camera: &'a CameraConfig,
    pub mapping: &'a MappingConfig,
    pub mc_samples: usize,
}

/// Flies one mission: capture, predict, fuse, plan, charge the leg; repeat
/// until the planner reports the budget exhausted.
pub fn run_mission(
    planner: &mut Planner,
    model: &ModelState,
    maps: &mut BeliefMaps,
    budget: &mut Budget,
    ctx: &MissionContext,
    start: Pose,
    rng_seed: u64,
) -> Result<MissionOutcome> {
    let mut pose = start;
    let mut images = Vec::new();
    let mut captures = vec![CaptureRecord { t: 0.0, x: pose.x, y: pose.y, z: pose.z, leg_cost: 0.0 }];
    loop {
        let i = images.len() as u64;
        let img = capture_image(ctx.raster, ctx.camera, &pose, seed::derive(rng_seed, 0, i))?;
        let out = predict_mc(model, &img, ctx.mc_samples, seed::derive(rng_seed, 1, i))?;
        let m = project_prediction(&out, &img.footprint, &maps.geometry, ctx.mapping.r_min)?;
        maps.fuse(&m)?;
        let footprint = img.footprint;
        images.push(img);
        let Some(next) = planner.next_measurement(maps, &pose, Some((&out, &footprint)), budget)? else {
            break;
        };
        let leg = flight_time(&pose, &next, &planner.motion);
        if !(leg > 0.0) {
            break;
        }
        budget.charge(leg)?;
        pose = next;
        captures.push(CaptureRecord { t: budget.spent_s, x: pose.x, y: pose.y, z: pose.z, leg_cost: leg });
    }
    Ok(MissionOutcome { images, captures, spent_s: budget.spent_s })
}

/// Ground-truth annotation: labels are copied verbatim from the capture.
pub fn oracle_label(images: &[ImageSample], set: &mut TrainSet) {
    for img in images {
        set.push(img.clone(), img.gt_labels.clone());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRow {
    pub mission_index: usize,
    pub num_labeled_images: usize,
    pub accuracy: f64,
    pub miou: f64,
    pub ece: f64,
    pub spent_budget_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub rows: Vec<LearningRow>,
}

impl LearningCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["mission_index", "num_labeled_images", "accuracy", "miou", "ece", "spent_budget_s"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<LearningRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn final_row(&self) -> Option<&LearningRow> {
        self.rows.last()
    }
}

pub fn write_path_csv(captures: &[CaptureRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in captures {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionSummary {
    pub mission_index: usize,
    pub captures: Vec<CaptureRecord>,
    pub images: usize,
    pub spent_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub curve: LearningCurve,
    pub missions: Vec<MissionSummary>,
    /// Seed-pretrained model the missions reset to.
    pub checkpoint: ModelState,
}

/// Seeds derived for a run, in logging order.
pub fn derived_seeds(cfg: &ExperimentConfig) -> Vec<(String, u64)> {
    let s = cfg.seed;
    let mut v = vec![
        ("master".to_string(), s),
        ("terrain".to_string(), cfg.terrain.params(s).seed),
        ("model_init".to_string(), seed::derive(s, stream::MODEL_INIT, 0)),
        ("seed_capture".to_string(), seed::derive(s, stream::SEED_CAPTURE, 0)),
        ("test_capture".to_string(), seed::derive(s, stream::TEST_CAPTURE, 0)),
        ("seed_train".to_string(), seed::derive(s, stream::SEED_TRAIN, 0)),
        ("eval".to_string(), seed::derive(s, stream::EVAL, 0)),
    ];
    for k in 1..=cfg.num_missions as u64 {
        v.push((format!("mission_{k}"), seed::derive(s, stream::MISSION, k)));
        v.push((format!("retrain_{k}"), seed::derive(s, stream::RETRAIN, k)));
    }
    v
}

/// Test images on a regular grid of the test strip.
pub fn capture_test_set(cfg: &ExperimentConfig, raster: &TerrainRaster) -> Result<Vec<ImageSample>> {
    let geo = raster.geometry;
    let ws = Workspace::new(&geo, &cfg.camera, &cfg.areas().test)?;
    let spacing = cfg.evaluation.test_spacing_m.unwrap_or_else(|| footprint_side_m(&cfg.camera, geo.resolution_m));
    let base = seed::derive(cfg.seed, stream::TEST_CAPTURE, 0);
    candidate_grid(&ws, spacing)
        .iter()
        .enumerate()
        .map(|(i, p)| capture_image(raster, &cfg.camera, p, seed::derive(base, 1, i as u64)))
        .collect()
}

/// Labelled seed images at random poses of the seed strip.
pub fn capture_seed_set(cfg: &ExperimentConfig, raster: &TerrainRaster) -> Result<Vec<ImageSample>> {
    let ws = Workspace::new(&raster.geometry, &cfg.camera, &cfg.areas().seed)?;
    let base = seed::derive(cfg.seed, stream::SEED_CAPTURE, 0);
    let mut rng = seed::rng(seed::derive(base, 0, 0));
    (0..cfg.evaluation.seed_images)
        .map(|i| {
            let p = ws.sample(&mut rng);
            capture_image(raster, &cfg.camera, &p, seed::derive(base, 1, i as u64))
        })
        .collect()
}

/// Model initialised from the config and trained on the seed set; its
/// weights become the checkpoint.
pub fn pretrain_checkpoint(cfg: &ExperimentConfig, seed_set: &[ImageSample]) -> Result<ModelState> {
    let init = ModelState::new(cfg.architecture(), cfg.model.dropout, seed::derive(cfg.seed, stream::MODEL_INIT, 0))?;
    let mut data = TrainSet::default();
    oracle_label(seed_set, &mut data);
    let decay = weight_decay_for(cfg.model.dropout, data.len());
    let (trained, _) = train(&init, &data, &cfg.training, decay, seed::derive(cfg.seed, stream::SEED_TRAIN, 0))?;
    Ok(trained.with_checkpoint_from_weights())
}

fn eval_metrics(cfg: &ExperimentConfig, model: &ModelState, test: &[ImageSample]) -> Result<Metrics> {
    evaluate(model, test, cfg.evaluation.mc_samples, cfg.evaluation.ece_bins, seed::derive(cfg.seed, stream::EVAL, 0))
}

fn write_mission_artifacts(
    dir: &Path,
    k: usize,
    maps: &BeliefMaps,
    captures: &[CaptureRecord],
) -> Result<()> {
    write_path_csv(captures, &dir.join(format!("path_mission_{k}.csv")))?;
    let scale = default_scale(&maps.geometry);
    let poses: Vec<Pose> = captures.iter().map(CaptureRecord::pose).collect();
    let mut sem = render_semantic_map(maps, scale);
    overlay_path(&mut sem, &maps.geometry, scale, &poses);
    save_png(&sem, &dir.join(format!("semantic_map_{k}.png")))?;
    let mut unc = render_uncertainty_map(maps, scale);
    overlay_path(&mut unc, &maps.geometry, scale, &poses);
    save_png(&unc, &dir.join(format!("uncertainty_map_{k}.png")))?;
    GridFile::from_maps(maps).save(&dir.join(format!("belief_map_{k}.grid")))
}

/// Runs the full protocol. With `out_dir`, artifacts are written as they are
/// produced so a failure leaves the completed missions on disk.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config_resolved.toml"), cfg.resolved().to_toml())?;
        let mut log = String::new();
        for (name, s) in derived_seeds(cfg) {
            writeln!(log, "{name}={s}").unwrap();
        }
        std::fs::write(dir.join("seeds.log"), log)?;
    }

    let raster = generate_synthetic_terrain(&cfg.terrain.params(cfg.seed))?;
    let test_set = capture_test_set(cfg, &raster)?;
    let seed_set = capture_seed_set(cfg, &raster)?;
    let checkpoint = pretrain_checkpoint(cfg, &seed_set)?;
    let workspace = cfg.mission_workspace()?;
    if let Some(dir) = out_dir {
        GridFile::from_terrain(&raster).save(&dir.join("terrain.grid"))?;
        save_png(&render_labels(&raster.geometry, &raster.labels, default_scale(&raster.geometry)), &dir.join("terrain.png"))?;
        save_checkpoint(&checkpoint, &dir.join("checkpoint.bin"))?;
    }

    let mut curve = LearningCurve::default();
    let m0 = eval_metrics(cfg, &checkpoint, &test_set)?;
    curve.rows.push(LearningRow {
        mission_index: 0,
        num_labeled_images: 0,
        accuracy: m0.accuracy,
        miou: m0.miou,
        ece: m0.ece,
        spent_budget_s: 0.0,
    });
    if let Some(dir) = out_dir {
        curve.write_csv(&dir.join("learning_curve.csv"))?;
    }

    let ctx = MissionContext {
        raster: &raster,
        camera: &cfg.camera,
        mapping: &cfg.mapping,
        mc_samples: cfg.evaluation.mc_samples,
    };
    let fresh_maps = || {
        BeliefMaps::new(raster.geometry, raster.num_classes, cfg.mapping.prior_var, cfg.mapping.u_prior)
    };
    let mut maps = fresh_maps()?;
    let mut model = checkpoint.clone();
    let mut data = TrainSet::default();
    let mut missions = Vec::new();
    for k in 1..=cfg.num_missions {
        let wrap = |e: Error| Error::Mission { mission: k, source: Box::new(e) };
        if !cfg.mapping.persist_maps {
            maps = fresh_maps()?;
        }
        let mission_seed = seed::derive(cfg.seed, stream::MISSION, k as u64);
        let mut planner = Planner::new(
            cfg.planner.clone(),
            workspace,
            cfg.camera.clone(),
            cfg.motion,
            k - 1,
            seed::rng(mission_seed).random(),
        )
        .map_err(wrap)?;
        let start = match cfg.planner.kind {
            crate::planning::PlannerKind::Coverage => planner.start_pose(),
            _ => cfg.start_pose().map_err(wrap)?,
        };
        let mut budget = Budget::new(cfg.budget_s);
        let outcome =
            run_mission(&mut planner, &model, &mut maps, &mut budget, &ctx, start, mission_seed).map_err(wrap)?;
        oracle_label(&outcome.images, &mut data);

        let base = reset_to_checkpoint(&checkpoint);
        let decay = weight_decay_for(cfg.model.dropout, data.len());
        let (trained, _) = train(&base, &data, &cfg.training, decay, seed::derive(cfg.seed, stream::RETRAIN, k as u64))
            .map_err(wrap)?;
        model = trained;
        let m = eval_metrics(cfg, &model, &test_set).map_err(wrap)?;
        curve.rows.push(LearningRow {
            mission_index: k,
            num_labeled_images: data.len(),
            accuracy: m.accuracy,
            miou: m.miou,
            ece: m.ece,
            spent_budget_s: outcome.spent_s,
        });
        if let Some(dir) = out_dir {
            write_mission_artifacts(dir, k, &maps, &outcome.captures).map_err(wrap)?;
            curve.write_csv(&dir.join("learning_curve.csv")).map_err(wrap)?;
        }
        missions.push(MissionSummary {
            mission_index: k,
            images: outcome.images.len(),
            captures: outcome.captures,
            spent_s: outcome.spent_s,
        });
    }
    Ok(ExperimentOutcome { curve, missions, checkpoint })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::{MotionModel, PlannerConfig, PlannerKind};
    use crate::terrain::{footprint_cells, TerrainParams};

    fn world() -> (TerrainRaster, CameraConfig, Workspace) {
        let mut p = TerrainParams::new(2, 64, 64, 3, 10.0);
        p.resolution_m = 1.0;
        let raster = generate_synthetic_terrain(&p).unwrap();
        let cam = CameraConfig { image_width_px: 8, image_height_px: 8, gsd_m: 1.0, ..Default::default() };
        let ws = Workspace::new(&raster.geometry, &cam, &raster.geometry.full_rect()).unwrap();
        (raster, cam, ws)
    }

    fn model() -> ModelState {
        let arch = crate::bayes::Architecture { feature_dim: 3, window: 1, hidden: 4, num_classes: 3 };
        ModelState::new(arch, 0.5, 1).unwrap().with_checkpoint_from_weights()
    }

    #[test]
    fn tiny_budget_gives_one_image() {
        let (raster, cam, ws) = world();
        let mapping = MappingConfig::default();
        let ctx = MissionContext { raster: &raster, camera: &cam, mapping: &mapping, mc_samples: 3 };
        let mut maps = BeliefMaps::new(raster.geometry, 3, 1.0, 1.0).unwrap();
        let motion = MotionModel::default();
        for kind in PlannerKind::ALL {
            let mut planner = Planner::new(PlannerConfig::new(kind), ws, cam.clone(), motion, 0, 1).unwrap();
            let mut budget = Budget::new(0.5);
            let start = planner.start_pose();
            let out = run_mission(&mut planner, &model(), &mut maps, &mut budget, &ctx, start, 3).unwrap();
            assert_eq!(out.images.len(), 1, "{kind:?}");
            assert_eq!(out.spent_s, 0.0);
        }
    }

    #[test]
    fn coverage_image_count_matches_waypoints() {
        let (raster, cam, ws) = world();
        let mapping = MappingConfig::default();
        let ctx = MissionContext { raster: &raster, camera: &cam, mapping: &mapping, mc_samples: 2 };
        let mut maps = BeliefMaps::new(raster.geometry, 3, 1.0, 1.0).unwrap();
        let motion = MotionModel::default();
        let budget_s = 120.0;
        let expected = crate::planning::plan_coverage(0, &ws, &cam, &motion, budget_s).unwrap();
        let mut planner = Planner::new(PlannerConfig::new(PlannerKind::Coverage), ws, cam.clone(), motion, 0, 1).unwrap();
        let mut budget = Budget::new(budget_s);
        let start = planner.start_pose();
        let out = run_mission(&mut planner, &model(), &mut maps, &mut budget, &ctx, start, 3).unwrap();
        assert_eq!(out.images.len(), expected.positions.len());
        assert!((out.spent_s - expected.cost_s).abs() < 1e-9);
    }

    #[test]
    fn missions_are_deterministic_and_in_bounds() {
        let (raster, cam, ws) = world();
        let mapping = MappingConfig::default();
        let ctx = MissionContext { raster: &raster, camera: &cam, mapping: &mapping, mc_samples: 2 };
        let motion = MotionModel::default();
        for kind in PlannerKind::ALL {
            let mut cfg = PlannerConfig::new(kind);
            cfg.step_m = 10.0;
            cfg.sample_dist_m = 6.0;
            cfg.fixed_horizon.max_evals = 60;
            let run = || {
                let mut maps = BeliefMaps::new(raster.geometry, 3, 1.0, 1.0).unwrap();
                let mut planner = Planner::new(cfg.clone(), ws, cam.clone(), motion, 0, 1).unwrap();
                let mut budget = Budget::new(80.0);
                let start = planner.start_pose();
                run_mission(&mut planner, &model(), &mut maps, &mut budget, &ctx, start, 3).unwrap()
            };
            let a = run();
            assert_eq!(a, run(), "{kind:?}");
            let legs: f64 = a.captures.iter().map(|c| c.leg_cost).sum();
            assert!(legs <= 80.0);
            assert!(a.images.len() > 1, "{kind:?}");
            for c in &a.captures {
                footprint_cells(&cam, &c.pose(), &raster.geometry).unwrap();
            }
        }
    }

    #[test]
    fn oracle_labels_are_ground_truth() {
        let (raster, cam, _) = world();
        let img = capture_image(&raster, &cam, &Pose::new(20.5, 20.5, 30.0), 1).unwrap();
        let mut set = TrainSet::default();
        oracle_label(&[], &mut set);
        assert!(set.is_empty());
        oracle_label(&[img.clone(), img.clone()], &mut set);
        assert_eq!(set.len(), 2);
        for py in 0..img.height {
            for px in 0..img.width {
                let (c, r) = img.pixel_cell(px, py);
                assert_eq!(set.labels[0][py * img.width + px], raster.label(c, r));
            }
        }
    }
}
