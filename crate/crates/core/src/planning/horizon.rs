use serde::{Deserialize, Serialize};

use super::{flight_time, footprint_side_m, MotionModel, Path};
use crate::cmaes::{default_population, optimize, CmaesConfig};
use crate::error::{Error, Result};
use crate::mapping::{BeliefMaps, RegionSums};
use crate::terrain::{footprint_cells, CameraConfig, CellRect, Pose, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    /// Look-ahead steps N.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Candidate grid spacing, m; defaults to one footprint side.
    #[serde(default)]
    pub grid_spacing_m: Option<f64>,
    /// Fly all N planned poses before replanning.
    #[serde(default)]
    pub execute_full_horizon: bool,
    #[serde(default)]
    pub population: Option<usize>,
    /// Initial CMA-ES step, m; defaults to half a footprint side.
    #[serde(default)]
    pub sigma0_m: Option<f64>,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_horizon() -> usize {
    5
}
fn default_max_evals() -> usize {
    600
}
fn default_patience() -> usize {
    20
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            grid_spacing_m: None,
            execute_full_horizon: false,
            population: None,
            sigma0_m: None,
            max_evals: default_max_evals(),
            patience: default_patience(),
        }
    }
}

/// Uniform grid of workspace poses, row-major from the lower-left corner.
pub fn candidate_grid(ws: &Workspace, spacing_m: f64) -> Vec<Pose> {
    let axis = |lo: f64, hi: f64| {
        let n = ((hi - lo) / spacing_m + 1e-9).floor() as usize + 1;
        (0..n).map(move |i| lo + i as f64 * spacing_m)
    };
    axis(ws.y_min, ws.y_max)
        .flat_map(|y| axis(ws.x_min, ws.x_max).map(move |x| Pose::new(x, y, ws.altitude_m)))
        .collect()
}

fn overlap(a: &CellRect, b: &CellRect) -> u64 {
    let w = a.col_end().min(b.col_end()).saturating_sub(a.col0.max(b.col0));
    let h = a.row_end().min(b.row_end()).saturating_sub(a.row0.max(b.row0));
    (w * h) as u64
}

/// `Σ (H_sim + 1)` over `fp`, with hits of `earlier` footprints added.
fn smoothed_hits(sums: &RegionSums, fp: &CellRect, earlier: &[CellRect]) -> u64 {
    sums.sum_hits + fp.area() as u64 + earlier.iter().map(|e| overlap(fp, e)).sum::<u64>()
}

/// Sequential greedy choice of `horizon` grid candidates maximising
/// `Σ u / (Σ (H_sim + 1) · c(prev, x))`, where `H_sim` includes hits of the
/// steps chosen so far. Candidates closer than `min_leg` to the previous pose
/// are excluded; ties go to the lowest candidate index. The returned path
/// starts with `start`.
pub fn greedy_grid_search(
    maps: &BeliefMaps,
    camera: &CameraConfig,
    start: &Pose,
    horizon: usize,
    candidates: &[Pose],
    motion: &MotionModel,
    min_leg: f64,
) -> Result<Path> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate grid is empty".into()));
    }
    let fps = candidates.iter().map(|c| footprint_cells(camera, c, &maps.geometry)).collect::<Result<Vec<_>>>()?;
    let sums: Vec<RegionSums> = fps.iter().map(|fp| maps.region_sums(fp)).collect();
    let mut positions = vec![*start];
    let mut chosen: Vec<CellRect> = Vec::new();
    for _ in 0..horizon {
        let prev = *positions.last().unwrap();
        let mut best: Option<(f64, usize)> = None;
        for (i, cand) in candidates.iter().enumerate() {
            if cand.distance(&prev) < min_leg {
                continue;
            }
            let hits = smoothed_hits(&sums[i], &fps[i], &chosen) as f64;
            let score = sums[i].sum_uncertainty / (hits * flight_time(&prev, cand, motion));
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, i));
            }
        }
        let Some((_, i)) = best else { break };
        positions.push(candidates[i]);
        chosen.push(fps[i]);
    }
    Ok(Path::new(positions, motion))
}

/// Path score `Σ u / Σ (Σ (H_sim + 1) · c)` over the poses after `start`,
/// with hits forward-simulated along the path. Each leg costs at least the
/// time of a `min_leg` move.
pub fn path_objective(
    maps: &BeliefMaps,
    camera: &CameraConfig,
    start: &Pose,
    poses: &[Pose],
    motion: &MotionModel,
    min_leg: f64,
) -> Result<f64> {
    let floor = motion.time_for_distance(min_leg);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut prev = *start;
    let mut earlier: Vec<CellRect> = Vec::with_capacity(poses.len());
    for p in poses {
        let fp = footprint_cells(camera, p, &maps.geometry)?;
        let sums = maps.region_sums(&fp);
        num += sums.sum_uncertainty;
        den += smoothed_hits(&sums, &fp, &earlier) as f64 * flight_time(&prev, p, motion).max(floor);
        earlier.push(fp);
        prev = *p;
    }
    Ok(num / den)
}

/// Refines the poses after `greedy.positions[0]` with CMA-ES on
/// [`path_objective`], clamping candidates into the workspace. Returns the
/// greedy path when no sampled path beats it.
#[allow(clippy::too_many_arguments)]
pub fn refine_path_cmaes(
    maps: &BeliefMaps,
    greedy: &Path,
    camera: &CameraConfig,
    ws: &Workspace,
    motion: &MotionModel,
    min_leg: f64,
    config: &HorizonConfig,
    seed: u64,
) -> Result<Path> {
    if greedy.positions.len() < 2 || config.max_evals == 0 {
        return Ok(greedy.clone());
    }
    let start = greedy.positions[0];
    let steps = &greedy.positions[1..];
    let dim = 2 * steps.len();
    let population = config.population.unwrap_or_else(|| default_population(dim));
    if config.max_evals < population {
        return Ok(greedy.clone());
    }
    let baseline = path_objective(maps, camera, &start, steps, motion, min_leg)?;
    let decode = |z: &[f64]| -> Vec<Pose> {
        z.chunks(2).map(|xy| ws.clamp(&Pose::new(xy[0], xy[1], ws.altitude_m))).collect()
    };
    let score = |poses: &[Pose]| path_objective(maps, camera, &start, poses, motion, min_leg).unwrap_or(f64::NAN);
    let x0: Vec<f64> = steps.iter().flat_map(|p| [p.x, p.y]).collect();
    let sigma0 = config.sigma0_m.unwrap_or_else(|| 0.5 * footprint_side_m(camera, ws.geometry.resolution_m));
    let cma = CmaesConfig { population: Some(population), sigma0, max_evals: config.max_evals, patience: config.patience };
    let result = optimize(|z| score(&decode(z)), &x0, &cma, seed)?;
    if result.best_f > baseline {
        let mut positions = vec![start];
        positions.extend(decode(&result.best_x));
        Ok(Path::new(positions, motion))
    } else {
        Ok(greedy.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::footprint_in;
    use crate::terrain::GridGeometry;

    fn setup() -> (BeliefMaps, CameraConfig, Workspace) {
        let geo = GridGeometry { width: 50, height: 50, resolution_m: 1.0 };
        let cam = CameraConfig { image_width_px: 10, image_height_px: 10, gsd_m: 1.0, ..Default::default() };
        let ws = Workspace::new(&geo, &cam, &geo.full_rect()).unwrap();
        (BeliefMaps::new(geo, 2, 1.0, 1.0).unwrap(), cam, ws)
    }

    #[test]
    fn grid_covers_workspace() {
        let (_, _, ws) = setup();
        let g = candidate_grid(&ws, 10.0);
        assert_eq!(g.len(), 25);
        assert_eq!((g[0].x, g[0].y), (ws.x_min, ws.y_min));
        assert_eq!(g[1].y, ws.y_min);
    }

    #[test]
    fn nearest_of_equal_candidates_chosen() {
        let (maps, cam, ws) = setup();
        let g = candidate_grid(&ws, 10.0);
        let start = Pose::new(23.0, 23.0, 30.0);
        let p = greedy_grid_search(&maps, &cam, &start, 1, &g, &MotionModel::default(), 1.0).unwrap();
        let nearest = g
            .iter()
            .filter(|c| c.distance(&start) >= 1.0)
            .min_by(|a, b| a.distance(&start).partial_cmp(&b.distance(&start)).unwrap())
            .unwrap();
        assert_eq!(p.positions[1], *nearest);
        assert_eq!(p.positions.len(), 2);
    }

    #[test]
    fn self_candidate_excluded() {
        let (maps, cam, ws) = setup();
        let g = candidate_grid(&ws, 10.0);
        let p = greedy_grid_search(&maps, &cam, &g[6], 3, &g, &MotionModel::default(), 1.0).unwrap();
        for w in p.positions.windows(2) {
            assert!(w[0].distance(&w[1]) >= 1.0);
        }
    }

    #[test]
    fn forward_simulated_hits_penalise_revisits() {
        let (maps, cam, ws) = setup();
        let g = candidate_grid(&ws, 10.0);
        let fps: Vec<CellRect> = g.iter().map(|c| footprint_in(&ws, &cam, c)).collect();
        let s = maps.region_sums(&fps[0]);
        assert!(smoothed_hits(&s, &fps[0], &[fps[0]]) > smoothed_hits(&s, &fps[0], &[fps[1]]));
        assert_eq!(smoothed_hits(&s, &fps[0], &[fps[1]]), 100);
    }

    #[test]
    fn zero_budget_refinement_is_identity() {
        let (maps, cam, ws) = setup();
        let g = candidate_grid(&ws, 10.0);
        let m = MotionModel::default();
        let greedy = greedy_grid_search(&maps, &cam, &g[0], 3, &g, &m, 1.0).unwrap();
        let cfg = HorizonConfig { max_evals: 0, ..Default::default() };
        assert_eq!(refine_path_cmaes(&maps, &greedy, &cam, &ws, &m, 1.0, &cfg, 1).unwrap(), greedy);
    }

    #[test]
    fn refinement_never_worse() {
        let (mut maps, cam, ws) = setup();
        for (i, u) in maps.uncertainty.iter_mut().enumerate() {
            *u = ((i * 7919) % 101) as f64 / 100.0;
        }
        maps.hits.iter_mut().for_each(|h| *h = 1);
        let g = candidate_grid(&ws, 10.0);
        let m = MotionModel::default();
        let greedy = greedy_grid_search(&maps, &cam, &g[0], 3, &g, &m, 1.0).unwrap();
        let refined = refine_path_cmaes(&maps, &greedy, &cam, &ws, &m, 1.0, &HorizonConfig::default(), 4).unwrap();
        let a = path_objective(&maps, &cam, &g[0], &greedy.positions[1..], &m, 1.0).unwrap();
        let b = path_objective(&maps, &cam, &g[0], &refined.positions[1..], &m, 1.0).unwrap();
        assert!(b >= a);
    }
}
