//! Greedy grid search over an uncertainty map with one off-grid hotspot,
//! followed by CMA-ES refinement of the chosen poses.
//!
//! `cargo run --release --example horizon_search`

use alipp::mapping::BeliefMaps;
use alipp::planning::{candidate_grid, greedy_grid_search, path_objective, refine_path_cmaes, HorizonConfig, MotionModel};
use alipp::terrain::{CameraConfig, GridGeometry, Pose, Workspace};

fn main() -> alipp::Result<()> {
    let geo = GridGeometry { width: 96, height: 96, resolution_m: 1.0 };
    let camera = CameraConfig { image_width_px: 10, image_height_px: 10, gsd_m: 1.0, ..Default::default() };
    let ws = Workspace::new(&geo, &camera, &geo.full_rect())?;
    let motion = MotionModel::default();

    let mut maps = BeliefMaps::new(geo, 3, 1.0, 1.0)?;
    maps.hits.fill(1);
    maps.uncertainty.fill(0.05);
    let (hx, hy) = (61.0, 37.0);
    for r in 0..geo.height {
        for c in 0..geo.width {
            let (x, y) = geo.cell_center(c, r);
            if (x - hx).abs() < 5.0 && (y - hy).abs() < 5.0 {
                maps.uncertainty[geo.index(c, r)] = 1.0;
            }
        }
    }

    let start = Pose::new(20.0, 20.0, camera.altitude_m);
    let grid = candidate_grid(&ws, 20.0);
    let min_leg = 1.0;
    let cfg = HorizonConfig { horizon: 2, max_evals: 800, ..Default::default() };
    let greedy = greedy_grid_search(&maps, &camera, &start, cfg.horizon, &grid, &motion, min_leg)?;
    let refined = refine_path_cmaes(&maps, &greedy, &camera, &ws, &motion, min_leg, &cfg, 1)?;

    for (name, path) in [("greedy", &greedy), ("refined", &refined)] {
        let score = path_objective(&maps, &camera, &start, &path.positions[1..], &motion, min_leg)?;
        let poses: Vec<String> = path.positions[1..].iter().map(|p| format!("({:.1}, {:.1})", p.x, p.y)).collect();
        println!("{name:<8} score {score:.4}  cost {:.1} s  poses {}", path.cost_s, poses.join(" -> "));
    }
    println!("hotspot centre ({hx}, {hy}); {} grid candidates", grid.len());
    Ok(())
}
