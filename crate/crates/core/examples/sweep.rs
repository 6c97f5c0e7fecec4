//! Runs two planners over two seeds in memory and aggregates the learning
//! curves on a shared grid of labelled-image counts, as the `sweep` command does.
//!
//! `cargo run --release --example sweep`

use alipp::cli::aggregate;
use alipp::config::ExperimentConfig;
use alipp::mission::run_experiment;
use alipp::planning::PlannerKind;

fn main() -> alipp::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.toml");
    let base = ExperimentConfig::load(path.as_ref())?;
    let mut runs = Vec::new();
    for kind in [PlannerKind::Coverage, PlannerKind::FixedHorizon] {
        for seed in [1, 2] {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.planner.kind = kind;
            runs.push((kind, run_experiment(&cfg, None)?.curve));
        }
    }
    println!("planner        images  runs  mIoU mean ± std");
    for row in aggregate(&runs, 6) {
        println!(
            "{:<14} {:>6.1}  {:>4}  {:.3} ± {:.3}",
            row.planner, row.num_labeled_images, row.n_runs, row.miou_mean, row.miou_std
        );
    }
    Ok(())
}
