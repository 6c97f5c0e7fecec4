//! Trains the dropout classifier on seed images and shows how the MC estimate
//! and its mutual information behave as the number of passes grows.
//!
//! `cargo run --release --example mc_dropout`

use alipp::bayes::{evaluate, predict_mc, PredictiveOutput};
use alipp::config::ExperimentConfig;
use alipp::mission::{capture_seed_set, capture_test_set, pretrain_checkpoint};
use alipp::terrain::generate_synthetic_terrain;

fn main() -> alipp::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/minimal.toml");
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let raster = generate_synthetic_terrain(&cfg.terrain.params(cfg.seed))?;
    let model = pretrain_checkpoint(&cfg, &capture_seed_set(&cfg, &raster)?)?;
    let test = capture_test_set(&cfg, &raster)?;
    println!("{} seed images, {} test images", cfg.evaluation.seed_images, test.len());

    let img = &test[0];
    let reference = predict_mc(&model, img, 512, 9)?;
    for t in [1, 2, 5, 20, 100] {
        let out = predict_mc(&model, img, t, 9)?;
        println!("T={t:<3} mean |p_T - p_512| = {:.4}  mean MI = {:.4}", gap(&out, &reference), out.mean_mi());
    }

    for t in [2, 20] {
        let m = evaluate(&model, &test, t, cfg.evaluation.ece_bins, 4)?;
        println!("test set, T={t:<2}: accuracy {:.3}  mIoU {:.3}  ECE {:.3}", m.accuracy, m.miou, m.ece);
    }

    let sure = PredictiveOutput::from_samples(1, 1, 2, &[vec![1.0, 0.0], vec![0.0, 1.0]])?;
    println!("two confident, disagreeing passes: MI = {}", sure.mi[0]);
    Ok(())
}

fn gap(a: &PredictiveOutput, b: &PredictiveOutput) -> f64 {
    a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.probs.len() as f64
}
