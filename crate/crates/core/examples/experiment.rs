//! Runs the complete active-learning protocol for one config and prints the
//! learning curve. Artifacts go to the directory given as the second argument.
//!
//! `cargo run --release --example experiment -- [config.toml] [out_dir]`

use std::path::PathBuf;

use alipp::config::ExperimentConfig;
use alipp::mission::run_experiment;

fn main() -> alipp::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.toml")));
    let out = args.next().map(PathBuf::from);
    let cfg = ExperimentConfig::load(&config)?;
    cfg.validate()?;

    let outcome = run_experiment(&cfg, out.as_deref())?;
    println!("planner {}, {} missions of {} s", cfg.planner.kind.name(), cfg.num_missions, cfg.budget_s);
    println!("mission  images  accuracy  mIoU   ECE    spent_s");
    for r in &outcome.curve.rows {
        println!(
            "{:>7}  {:>6}  {:>8.3}  {:.3}  {:.3}  {:>7.1}",
            r.mission_index, r.num_labeled_images, r.accuracy, r.miou, r.ece, r.spent_budget_s
        );
    }
    if let Some(dir) = out {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}
