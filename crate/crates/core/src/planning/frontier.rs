use super::{footprint_in, random_pose};
use crate::mapping::BeliefMaps;
use crate::seed::SimRng;
use crate::terrain::{CameraConfig, Pose, Workspace};

/// Frontier cells of the mission area, visited row-major and thinned so every
/// kept candidate is at least `sample_dist_m` from all earlier ones. Each
/// candidate is the cell center clamped into the workspace.
pub fn frontier_candidates(maps: &BeliefMaps, ws: &Workspace, sample_dist_m: f64) -> Vec<Pose> {
    let mut kept: Vec<Pose> = Vec::new();
    for (c, r) in maps.frontier_cells_in(&ws.area) {
        let (x, y) = maps.geometry.cell_center(c, r);
        let p = ws.clamp(&Pose::new(x, y, ws.altitude_m));
        if kept.iter().all(|q| q.distance(&p) >= sample_dist_m) {
            kept.push(p);
        }
    }
    kept
}

/// Frontier candidate maximising `Σ u / (Σ hits + |footprint|)`; ties go to the
/// earliest candidate. Candidates closer than `min_leg` are skipped. Falls back
/// to a random workspace pose when no candidate remains.
pub fn plan_frontier(
    maps: &BeliefMaps,
    pose: &Pose,
    camera: &CameraConfig,
    ws: &Workspace,
    sample_dist_m: f64,
    min_leg: f64,
    rng: &mut SimRng,
) -> Pose {
    let mut best: Option<(f64, Pose)> = None;
    for cand in frontier_candidates(maps, ws, sample_dist_m) {
        if cand.distance(pose) < min_leg {
            continue;
        }
        let fp = footprint_in(ws, camera, &cand);
        let sums = maps.region_sums(&fp);
        let score = sums.sum_uncertainty / (sums.sum_hits + fp.area() as u64) as f64;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, cand));
        }
    }
    match best {
        Some((_, p)) => p,
        None => random_pose(ws, pose, min_leg, rng),
    }
}
