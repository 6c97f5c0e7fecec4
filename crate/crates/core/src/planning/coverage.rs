use super::{footprint_side_m, MotionModel, Path};
use crate::error::{Error, Result};
use crate::terrain::{CameraConfig, Pose, Workspace};

/// Track and waypoint spacing of the lawnmower: one footprint side.
pub fn coverage_spacing_m(camera: &CameraConfig, resolution_m: f64) -> f64 {
    footprint_side_m(camera, resolution_m)
}

/// Positions `start, start + step, …` within `[lo, hi]`, with `lo` and `hi`
/// added when the progression misses them so that the edges are imaged.
fn ticks(lo: f64, hi: f64, start: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if start > lo + 1e-9 {
        out.push(lo);
    }
    let mut v = start;
    while v <= hi + 1e-9 {
        out.push(v.min(hi).max(lo));
        v += step;
    }
    if out.last().is_none_or(|&l| l < hi - 1e-9) {
        out.push(hi);
    }
    out
}

/// Serpentine lawnmower over the workspace. Even missions fly rows parallel to
/// x, odd missions rows parallel to y; the lateral phase shifts every second
/// mission. Tracks always include both workspace edges, so an unlimited path
/// images every cell. The path is truncated to `budget_s`.
pub fn plan_coverage(
    mission_index: usize,
    ws: &Workspace,
    camera: &CameraConfig,
    motion: &MotionModel,
    budget_s: f64,
) -> Result<Path> {
    let spacing = coverage_spacing_m(camera, ws.geometry.resolution_m);
    if !(spacing > 0.0) || ws.x_max < ws.x_min || ws.y_max < ws.y_min {
        return Err(Error::InvalidArgument("footprint does not fit the mission area".into()));
    }
    let phase = ((mission_index / 2) as f64 * 0.618_033_988_749_895).fract() * spacing;
    let along_x = mission_index.is_multiple_of(2);
    let (lat_lo, lat_hi, lon_lo, lon_hi) =
        if along_x { (ws.y_min, ws.y_max, ws.x_min, ws.x_max) } else { (ws.x_min, ws.x_max, ws.y_min, ws.y_max) };
    let lateral = ticks(lat_lo, lat_hi, lat_lo + phase, spacing);
    let along = ticks(lon_lo, lon_hi, lon_lo, spacing);
    let mut positions = Vec::with_capacity(lateral.len() * along.len());
    for (i, &l) in lateral.iter().enumerate() {
        let row: Box<dyn Iterator<Item = &f64>> =
            if i % 2 == 0 { Box::new(along.iter()) } else { Box::new(along.iter().rev()) };
        for &a in row {
            let (x, y) = if along_x { (a, l) } else { (l, a) };
            positions.push(Pose::new(x, y, ws.altitude_m));
        }
    }
    Ok(Path::new(positions, motion).truncate_to_budget(budget_s, motion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{footprint_cells, GridGeometry};

    fn big() -> (Workspace, CameraConfig) {
        let geo = GridGeometry { width: 6000, height: 6000, resolution_m: 0.15 };
        let cam = CameraConfig::default();
        let ws = Workspace::new(&geo, &cam, &geo.full_rect()).unwrap();
        (ws, cam)
    }

    #[test]
    fn first_mission_rows_follow_x_with_footprint_spacing() {
        let (ws, cam) = big();
        let m = MotionModel::default();
        let p = plan_coverage(0, &ws, &cam, &m, f64::INFINITY).unwrap();
        let (a, b) = (p.positions[0], p.positions[1]);
        assert_eq!(a.y, b.y);
        assert!((b.x - a.x - 15.0).abs() < 1e-9);
        let next_row = p.positions.iter().find(|q| q.y != a.y).unwrap();
        assert!((next_row.y - a.y - 15.0).abs() < 1e-9);
    }

    #[test]
    fn second_mission_rows_follow_y() {
        let (ws, cam) = big();
        let p = plan_coverage(1, &ws, &cam, &MotionModel::default(), f64::INFINITY).unwrap();
        assert_eq!(p.positions[0].x, p.positions[1].x);
        assert!(p.positions[1].y > p.positions[0].y);
    }

    #[test]
    fn missions_shift_and_stay_in_budget_and_bounds() {
        let geo = GridGeometry { width: 120, height: 80, resolution_m: 1.0 };
        let cam = CameraConfig { image_width_px: 16, image_height_px: 16, gsd_m: 1.0, ..Default::default() };
        let ws = Workspace::new(&geo, &cam, &geo.full_rect()).unwrap();
        let m = MotionModel::default();
        let p0 = plan_coverage(0, &ws, &cam, &m, f64::INFINITY).unwrap();
        let p2 = plan_coverage(2, &ws, &cam, &m, f64::INFINITY).unwrap();
        assert_ne!(p0.positions, p2.positions);
        for k in 0..6 {
            let p = plan_coverage(k, &ws, &cam, &m, 300.0).unwrap();
            assert!(p.cost_s <= 300.0);
            for q in &p.positions {
                footprint_cells(&cam, q, &geo).unwrap();
            }
        }
    }
}
