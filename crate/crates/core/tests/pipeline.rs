//! Experiment-level invariants on a small configuration.

use std::path::Path;

use alipp::bayes::{load_checkpoint, reset_to_checkpoint, weight_decay_for};
use alipp::config::ExperimentConfig;
use alipp::export::GridFile;
use alipp::mission::{capture_test_set, run_experiment, LearningCurve};
use alipp::planning::PlannerKind;
use alipp::terrain::{footprint_cells, generate_synthetic_terrain};

fn minimal() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/minimal.toml");
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn decay_follows_dropout_and_dataset_size() {
    assert_eq!(weight_decay_for(0.5, 100), 0.0025);
    assert_eq!(weight_decay_for(0.5, 200), 0.00125);
}

#[test]
fn every_planner_grows_the_dataset_within_budget() {
    for kind in PlannerKind::ALL {
        let mut cfg = minimal();
        cfg.planner.kind = kind;
        let out = run_experiment(&cfg, None).unwrap();
        assert_eq!(out.curve.rows.len(), cfg.num_missions + 1);
        for w in out.curve.rows.windows(2) {
            assert!(w[1].num_labeled_images > w[0].num_labeled_images, "{kind:?}");
        }
        let area = cfg.areas().mission;
        for m in &out.missions {
            assert!(m.images >= 1);
            let spent: f64 = m.captures.iter().map(|c| c.leg_cost).sum();
            assert!(spent <= cfg.budget_s, "{kind:?} spent {spent}");
            for c in &m.captures {
                let fp = footprint_cells(&cfg.camera, &c.pose(), &cfg.terrain.geometry()).unwrap();
                assert!(area.contains_rect(&fp));
            }
        }
    }
}

#[test]
fn test_images_never_overlap_the_mission_area() {
    let cfg = minimal();
    let raster = generate_synthetic_terrain(&cfg.terrain.params(cfg.seed)).unwrap();
    let mission = cfg.areas().mission;
    let test = capture_test_set(&cfg, &raster).unwrap();
    assert!(!test.is_empty());
    assert!(test.iter().all(|img| !img.footprint.intersects(&mission)));
}

#[test]
fn artifacts_are_written_and_checkpoint_is_preserved() {
    let cfg = minimal();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    for name in ["learning_curve.csv", "config_resolved.toml", "seeds.log", "terrain.grid", "terrain.png", "checkpoint.bin"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    for k in 1..=cfg.num_missions {
        for name in [
            format!("path_mission_{k}.csv"),
            format!("semantic_map_{k}.png"),
            format!("uncertainty_map_{k}.png"),
            format!("belief_map_{k}.grid"),
        ] {
            assert!(dir.path().join(&name).exists(), "{name}");
        }
    }
    let saved = load_checkpoint(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(saved, out.checkpoint);
    assert_eq!(reset_to_checkpoint(&saved).weights, out.checkpoint.checkpoint);
    assert_eq!(saved.weights, saved.checkpoint);
    assert_eq!(LearningCurve::read_csv(&dir.path().join("learning_curve.csv")).unwrap(), out.curve);
}

#[test]
fn maps_reset_between_missions_unless_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    let fp_area = (cfg.camera.image_width_px * cfg.camera.image_height_px) as u64;
    let hits = |k: usize, d: &Path| -> u64 {
        let g = GridFile::load(&d.join(format!("belief_map_{k}.grid"))).unwrap();
        g.values.iter().skip(1).step_by(2).map(|&v| v as u64).sum()
    };
    assert_eq!(hits(2, dir.path()), out.missions[1].images as u64 * fp_area);

    let persisted = tempfile::tempdir().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.mapping.persist_maps = true;
    let out2 = run_experiment(&cfg2, Some(persisted.path())).unwrap();
    let total: u64 = out2.missions.iter().map(|m| m.images as u64).sum();
    assert_eq!(hits(2, persisted.path()), total * fp_area);
}

#[test]
fn identical_configs_give_identical_curves() {
    let cfg = minimal();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(a.path())).unwrap();
    let snapshot = ExperimentConfig::load(&a.path().join("config_resolved.toml")).unwrap();
    run_experiment(&snapshot, Some(b.path())).unwrap();
    for name in ["learning_curve.csv", "path_mission_1.csv", "path_mission_2.csv", "seeds.log", "config_resolved.toml"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
