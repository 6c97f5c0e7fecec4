//! Flies one mission with each planner on the same terrain, model and budget
//! and reports images taken, budget spent and cells observed.
//!
//! `cargo run --release --example planners`

use alipp::config::ExperimentConfig;
use alipp::mapping::BeliefMaps;
use alipp::mission::{capture_seed_set, pretrain_checkpoint, run_mission, MissionContext};
use alipp::planning::{flight_time, Budget, Planner, PlannerKind};
use alipp::terrain::generate_synthetic_terrain;

fn main() -> alipp::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.toml");
    let mut cfg = ExperimentConfig::load(path.as_ref())?;
    cfg.budget_s = 200.0;
    let raster = generate_synthetic_terrain(&cfg.terrain.params(cfg.seed))?;
    let model = pretrain_checkpoint(&cfg, &capture_seed_set(&cfg, &raster)?)?;
    let ws = cfg.mission_workspace()?;
    let ctx = MissionContext { raster: &raster, camera: &cfg.camera, mapping: &cfg.mapping, mc_samples: 10 };
    println!("mission area {:?}, budget {} s", ws.area, cfg.budget_s);

    for kind in PlannerKind::ALL {
        let mut pc = cfg.planner.clone();
        pc.kind = kind;
        let mut planner = Planner::new(pc, ws, cfg.camera.clone(), cfg.motion, 0, 5)?;
        let start = if kind == PlannerKind::Coverage { planner.start_pose() } else { cfg.start_pose()? };
        let mut maps = BeliefMaps::new(raster.geometry, raster.num_classes, cfg.mapping.prior_var, cfg.mapping.u_prior)?;
        let mut budget = Budget::new(cfg.budget_s);
        let out = run_mission(&mut planner, &model, &mut maps, &mut budget, &ctx, start, 11)?;
        let longest = out.captures.windows(2).map(|w| flight_time(&w[0].pose(), &w[1].pose(), &cfg.motion)).fold(0.0, f64::max);
        println!(
            "{:<14} {:>3} images  {:>6.1} s spent  longest leg {:>5.1} s  {:>5} cells observed",
            kind.name(),
            out.images.len(),
            out.spent_s,
            longest,
            maps.observed_cells()
        );
    }
    Ok(())
}
