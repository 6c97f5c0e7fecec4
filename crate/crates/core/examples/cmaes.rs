//! Minimises the sphere and Rosenbrock functions with the CMA-ES optimiser.
//!
//! `cargo run --release --example cmaes`

use alipp::cmaes::{minimize, CmaesConfig};

fn main() -> alipp::Result<()> {
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let rosenbrock = |x: &[f64]| {
        x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum::<f64>()
    };

    let cfg = CmaesConfig { sigma0: 1.0, max_evals: 3_000, patience: 50, ..Default::default() };
    let r = minimize(sphere, &[3.0; 10], &cfg, 1)?;
    println!("sphere n=10: f = {:.2e} after {} evaluations ({} generations)", r.best_f, r.evals_used, r.generations);

    let cfg = CmaesConfig { sigma0: 0.5, max_evals: 40_000, patience: 400, ..Default::default() };
    let r = minimize(rosenbrock, &[0.0; 5], &cfg, 2)?;
    let x: Vec<String> = r.best_x.iter().map(|v| format!("{v:.4}")).collect();
    println!("Rosenbrock n=5: f = {:.2e} at [{}] after {} evaluations", r.best_f, x.join(", "), r.evals_used);
    Ok(())
}
