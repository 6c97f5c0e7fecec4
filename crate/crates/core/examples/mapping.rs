//! Fuses MC-dropout predictions from overlapping images into the belief maps
//! and prints how observed cells, variance and uncertainty evolve.
//!
//! `cargo run --release --example mapping`

use alipp::bayes::predict_mc;
use alipp::config::ExperimentConfig;
use alipp::mapping::{project_prediction, BeliefMaps};
use alipp::mission::{capture_seed_set, pretrain_checkpoint};
use alipp::terrain::{capture_image, generate_synthetic_terrain, Pose};

fn main() -> alipp::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.toml");
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let raster = generate_synthetic_terrain(&cfg.terrain.params(cfg.seed))?;
    let model = pretrain_checkpoint(&cfg, &capture_seed_set(&cfg, &raster)?)?;
    let mut maps = BeliefMaps::new(raster.geometry, raster.num_classes, cfg.mapping.prior_var, cfg.mapping.u_prior)?;

    let z = cfg.camera.altitude_m;
    let probe = raster.geometry.index(30, 30);
    for (i, (x, y)) in [(30.0, 30.0), (33.0, 30.0), (30.0, 33.0), (50.0, 40.0)].into_iter().enumerate() {
        let img = capture_image(&raster, &cfg.camera, &Pose::new(x, y, z), i as u64)?;
        let out = predict_mc(&model, &img, cfg.evaluation.mc_samples, i as u64)?;
        maps.fuse(&project_prediction(&out, &img.footprint, &raster.geometry, cfg.mapping.r_min)?)?;
        let c = maps.num_classes;
        println!(
            "after image {} at ({x}, {y}): {} cells observed; cell (30,30) hits {} var[0] {:.4} u {:.3} belief {:?}",
            i + 1,
            maps.observed_cells(),
            maps.hits[probe],
            maps.var[probe * c],
            maps.uncertainty[probe],
            maps.mean[probe * c..(probe + 1) * c].iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>(),
        );
    }
    println!("ground truth at (30,30): class {}", raster.label(30, 30));
    Ok(())
}
