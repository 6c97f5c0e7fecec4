use rand::Rng;

use super::random_pose;
use crate::bayes::PredictiveOutput;
use crate::mapping::BeliefMaps;
use crate::seed::SimRng;
use crate::terrain::{cell_to_pixel_offset, pixel_to_cell_offset, CameraConfig, CellRect, Pose, Workspace};

/// Image edges in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    North,
    East,
    South,
    West,
}

impl Edge {
    pub const ORDER: [Edge; 4] = [Edge::North, Edge::East, Edge::South, Edge::West];

    pub fn direction(&self) -> (f64, f64) {
        match self {
            Edge::North => (0.0, 1.0),
            Edge::East => (1.0, 0.0),
            Edge::South => (0.0, -1.0),
            Edge::West => (-1.0, 0.0),
        }
    }

    /// Pixel ranges `(x0..x1, y0..y1)` of the strip along this edge.
    fn strip(&self, w: usize, h: usize, edge_px: usize) -> (usize, usize, usize, usize) {
        let ex = edge_px.clamp(1, w);
        let ey = edge_px.clamp(1, h);
        match self {
            Edge::North => (0, w, h - ey, h),
            Edge::South => (0, w, 0, ey),
            Edge::East => (w - ex, w, 0, h),
            Edge::West => (0, ex, 0, h),
        }
    }
}

/// Footprint offsets `[c0, c1)` covered by pixels `[p0, p1)` along one axis.
fn pixel_span_to_cells(p0: usize, p1: usize, pixels: usize, cells: usize) -> (usize, usize) {
    if pixels >= cells {
        (pixel_to_cell_offset(p0, pixels, cells), pixel_to_cell_offset(p1 - 1, pixels, cells) + 1)
    } else {
        let covered: Vec<usize> =
            (0..cells).filter(|&c| (p0..p1).contains(&cell_to_pixel_offset(c, pixels, cells))).collect();
        (covered[0], covered[covered.len() - 1] + 1)
    }
}

/// `Σ mi / Σ (hits + 1)` for each edge strip, in [`Edge::ORDER`].
pub fn edge_scores(output: &PredictiveOutput, footprint: &CellRect, maps: &BeliefMaps, edge_px: usize) -> [f64; 4] {
    let (w, h) = (output.width, output.height);
    Edge::ORDER.map(|edge| {
        let (x0, x1, y0, y1) = edge.strip(w, h, edge_px);
        let mut mi = 0.0;
        for py in y0..y1 {
            for px in x0..x1 {
                mi += output.mi[py * w + px];
            }
        }
        let (c0, c1) = pixel_span_to_cells(x0, x1, w, footprint.cols);
        let (r0, r1) = pixel_span_to_cells(y0, y1, h, footprint.rows);
        let rect = CellRect::new(footprint.col0 + c0, footprint.row0 + r0, c1 - c0, r1 - r0);
        let sums = maps.region_sums(&rect);
        mi / (sums.sum_hits + rect.area() as u64) as f64
    })
}

fn step_towards(ws: &Workspace, pose: &Pose, edge: Edge, step_m: f64) -> Pose {
    let (dx, dy) = edge.direction();
    ws.clamp(&Pose::new(pose.x + dx * step_m, pose.y + dy * step_m, pose.z))
}

/// Moves `step_m` toward the image edge with the highest uncertainty score,
/// clamped to the workspace. Edges whose clamped move is shorter than
/// `min_leg` are skipped. Without a previous prediction the direction is random.
#[allow(clippy::too_many_arguments)]
pub fn plan_image_based(
    last: Option<(&PredictiveOutput, &CellRect)>,
    maps: &BeliefMaps,
    pose: &Pose,
    step_m: f64,
    edge_px: usize,
    _camera: &CameraConfig,
    ws: &Workspace,
    min_leg: f64,
    rng: &mut SimRng,
) -> Pose {
    let order: Vec<Edge> = match last {
        Some((output, footprint)) => {
            let scores = edge_scores(output, footprint, maps, edge_px);
            let mut idx: Vec<usize> = (0..4).collect();
            idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
            idx.into_iter().map(|i| Edge::ORDER[i]).collect()
        }
        None => {
            let first = rng.random_range(0..4);
            (0..4).map(|k| Edge::ORDER[(first + k) % 4]).collect()
        }
    };
    for edge in order {
        let next = step_towards(ws, pose, edge, step_m);
        if next.distance(pose) >= min_leg {
            return next;
        }
    }
    random_pose(ws, pose, min_leg, rng)
}
