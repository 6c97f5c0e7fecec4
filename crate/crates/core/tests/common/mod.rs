#![allow(dead_code)]

use alipp::bayes::{loss_and_gradient, Architecture, Batch, ModelState, Weights};
use alipp::planning::{candidate_grid, greedy_grid_search, MotionModel};
use alipp::mapping::BeliefMaps;
use alipp::seed;
use alipp::terrain::{CameraConfig, CellRect, GridGeometry, ImageSample, Pose, Workspace};
use rand::Rng;

pub fn micro_arch(classes: usize) -> Architecture {
    Architecture { feature_dim: 2, window: 3, hidden: 6, num_classes: classes }
}

pub fn micro_model(classes: usize, dropout: f64, seed: u64) -> ModelState {
    ModelState::new(micro_arch(classes), dropout, seed).unwrap()
}

/// Image with uniform random features and labels.
pub fn random_image(w: usize, h: usize, dim: usize, classes: usize, seed: u64) -> ImageSample {
    let mut rng = seed::rng(seed);
    ImageSample {
        pose: Pose::new(0.0, 0.0, 30.0),
        width: w,
        height: h,
        feature_dim: dim,
        features: (0..w * h * dim).map(|_| rng.random::<f64>()).collect(),
        gt_labels: (0..w * h).map(|_| rng.random_range(0..classes as u16)).collect(),
        footprint: CellRect::new(0, 0, w, h),
    }
}

/// Unit-resolution square map with random per-cell uncertainty and hits.
pub fn random_maps(side: usize, seed: u64) -> BeliefMaps {
    let geo = GridGeometry { width: side, height: side, resolution_m: 1.0 };
    let mut maps = BeliefMaps::new(geo, 2, 1.0, 1.0).unwrap();
    let mut rng = seed::rng(seed);
    for i in 0..geo.cells() {
        if rng.random::<f64>() < 0.6 {
            maps.hits[i] = rng.random_range(1..4);
            maps.uncertainty[i] = rng.random::<f64>();
        }
    }
    maps
}

pub fn square_camera(px: usize) -> CameraConfig {
    CameraConfig { image_width_px: px, image_height_px: px, gsd_m: 1.0, altitude_m: 30.0, noise_sigma: 0.0 }
}

/// Distance flown in time `t_total` under the rest-to-rest profile
/// `v(t) = min(a t, v_max, a (T - t))`, integrated with the trapezoid rule on a
/// grid that contains every kink (exact for piecewise-linear `v`).
pub fn integrated_distance(t_total: f64, a: f64, v_max: f64) -> f64 {
    let v = |t: f64| (a * t).min(v_max).min(a * (t_total - t)).max(0.0);
    let mut nodes: Vec<f64> = (0..=64).map(|i| t_total * i as f64 / 64.0).collect();
    let ramp = v_max / a;
    for k in [ramp, t_total - ramp, 0.5 * t_total] {
        if k > 0.0 && k < t_total {
            nodes.push(k);
        }
    }
    nodes.sort_by(f64::total_cmp);
    nodes.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (v(w[0]) + v(w[1]))).sum()
}

/// Travel time for distance `d` found by bisection on [`integrated_distance`].
pub fn numeric_flight_time(d: f64, a: f64, v_max: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while integrated_distance(hi, a, v_max) < d {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if integrated_distance(mid, a, v_max) < d {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-11 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Cell-by-cell sequential greedy search used as an oracle: scores are
/// `Σu / (Σ(H + 1 + earlier covers) · t(prev, x))`, candidates nearer than
/// `min_leg` are skipped and ties go to the lowest index. Leg times come from
/// the closed form, which is checked on its own elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_greedy(
    maps: &BeliefMaps,
    camera: &CameraConfig,
    start: &Pose,
    horizon: usize,
    candidates: &[Pose],
    accel: f64,
    v_max: f64,
    min_leg: f64,
) -> Vec<Pose> {
    let w = maps.geometry.width;
    let rects: Vec<CellRect> =
        candidates.iter().map(|c| alipp::terrain::footprint_cells(camera, c, &maps.geometry).unwrap()).collect();
    let mut times_covered = vec![0u64; maps.geometry.cells()];
    let mut path = vec![*start];
    for _ in 0..horizon {
        let prev = *path.last().unwrap();
        let mut best_score = f64::NEG_INFINITY;
        let mut best = None;
        for (i, cand) in candidates.iter().enumerate() {
            let d = cand.distance(&prev);
            if d < min_leg {
                continue;
            }
            let mut u = 0.0;
            let mut h = 0u64;
            for (c, r) in rects[i].cells() {
                let k = r * w + c;
                u += if maps.hits[k] == 0 { maps.u_prior } else { maps.uncertainty[k] };
                h += maps.hits[k] as u64 + 1 + times_covered[k];
            }
            let t = alipp::planning::MotionModel { accel, max_speed: v_max }.time_for_distance(d);
            let score = u / (h as f64 * t);
            if best.is_none() || score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        for (c, r) in rects[i].cells() {
            times_covered[r * w + c] += 1;
        }
        path.push(candidates[i]);
    }
    path
}

fn random_instance(seed: u64) -> (Architecture, Weights, Batch, f64) {
    let mut rng = seed::rng(seed);
    let classes = rng.random_range(2..5);
    let arch = Architecture {
        feature_dim: rng.random_range(1..3),
        window: [1, 3][rng.random_range(0..2)],
        hidden: rng.random_range(1..6),
        num_classes: classes,
    };
    let mut w = Weights::init(&arch, rng.random());
    for v in w.b1.iter_mut().chain(w.b2.iter_mut()) {
        *v = rng.random::<f64>() - 0.5;
    }
    let n = rng.random_range(1..6);
    let p: f64 = [0.0, 0.3, 0.5][rng.random_range(0..3)];
    let keep = 1.0 / (1.0 - p);
    let batch = Batch {
        inputs: (0..n * arch.input_dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
        labels: (0..n).map(|_| rng.random_range(0..classes)).collect(),
        masks: (0..n * arch.hidden).map(|_| if rng.random::<f64>() >= p { keep } else { 0.0 }).collect(),
    };
    (arch, w, batch, rng.random::<f64>() * 0.1)
}

/// Largest relative error between the analytic gradient and central
/// differences, with a floor on the denominator for near-zero entries.
pub fn gradient_error(seed: u64) -> f64 {
    let (arch, w, batch, decay) = random_instance(seed);
    let (_, grad) = loss_and_gradient(&arch, &w, &batch, decay);
    let h = 1e-6;
    let analytic: Vec<f64> = grad.iter().copied().collect();
    let mut worst: f64 = 0.0;
    for (k, &g) in analytic.iter().enumerate() {
        let mut plus = w.clone();
        *plus.iter_mut().nth(k).unwrap() += h;
        let mut minus = w.clone();
        *minus.iter_mut().nth(k).unwrap() -= h;
        let fd = (loss_and_gradient(&arch, &plus, &batch, decay).0 - loss_and_gradient(&arch, &minus, &batch, decay).0)
            / (2.0 * h);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

/// Random square map with a candidate grid of at most 5×5 points.
pub fn oracle_case(seed: u64) -> (BeliefMaps, CameraConfig, Workspace, Vec<Pose>, Pose, usize, f64) {
    let mut rng = seed::rng(seed);
    let side = rng.random_range(10..25);
    let cam = square_camera(rng.random_range(2..6));
    let maps = random_maps(side, rng.random());
    let geo = GridGeometry { width: side, height: side, resolution_m: 1.0 };
    let ws = Workspace::new(&geo, &cam, &geo.full_rect()).unwrap();
    let per_axis = rng.random_range(2..6) as f64;
    let spacing = ((ws.x_max - ws.x_min) / (per_axis - 1.0)).max(1.0);
    let grid = candidate_grid(&ws, spacing);
    let start = ws.sample(&mut rng);
    let horizon = rng.random_range(1..4);
    let min_leg = [0.0, 0.5, spacing][rng.random_range(0..3)];
    (maps, cam, ws, grid, start, horizon, min_leg)
}

pub fn greedy_matches_oracle(seed: u64) -> bool {
    let (maps, cam, _, grid, start, horizon, min_leg) = oracle_case(seed);
    assert!(grid.len() <= 25);
    let motion = MotionModel::default();
    let fast = greedy_grid_search(&maps, &cam, &start, horizon, &grid, &motion, min_leg).unwrap();
    let slow = brute_force_greedy(&maps, &cam, &start, horizon, &grid, motion.accel, motion.max_speed, min_leg);
    fast.positions == slow
}

