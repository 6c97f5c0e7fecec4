//! Ground-truth world, nadir camera simulation and world/grid conversions.
//!
//! World coordinates are meters with the origin at the lower-left corner of
//! cell `(0, 0)`; `x` grows with the column index and `y` with the row index.
//! Image pixel `(px, py)` sits over the footprint column `px` and row `py`
//! (scaled by the pixel/cell ratio), so image row `H - 1` is the northern edge.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Smallest accepted terrain side, in cells.
pub const MIN_SIDE_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned block of grid cells, `cols × rows` starting at `(col0, row0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl CellRect {
    pub fn new(col0: usize, row0: usize, cols: usize, rows: usize) -> Self {
        Self { col0, row0, cols, rows }
    }

    pub fn area(&self) -> usize {
        self.cols * self.rows
    }

    pub fn col_end(&self) -> usize {
        self.col0 + self.cols
    }

    pub fn row_end(&self) -> usize {
        self.row0 + self.rows
    }

    pub fn contains_cell(&self, col: usize, row: usize) -> bool {
        col >= self.col0 && col < self.col_end() && row >= self.row0 && row < self.row_end()
    }

    pub fn contains_rect(&self, other: &CellRect) -> bool {
        other.col0 >= self.col0
            && other.col_end() <= self.col_end()
            && other.row0 >= self.row0
            && other.row_end() <= self.row_end()
    }

    pub fn intersects(&self, other: &CellRect) -> bool {
        self.col0 < other.col_end()
            && other.col0 < self.col_end()
            && self.row0 < other.row_end()
            && other.row0 < self.row_end()
    }

    /// Cells in row-major order as `(col, row)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row0..self.row_end()).flat_map(move |r| (self.col0..self.col_end()).map(move |c| (c, r)))
    }
}

/// Grid shape and resolution shared by the raster, the belief maps and the planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution_m: f64,
}

impl GridGeometry {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn full_rect(&self) -> CellRect {
        CellRect::new(0, 0, self.width, self.height)
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Cell index along one axis for a coordinate in meters. A coordinate on an
    /// exact cell boundary belongs to the lower cell.
    pub fn axis_cell(&self, coord_m: f64) -> i64 {
        let q = coord_m / self.resolution_m;
        let r = q.round();
        if (q - r).abs() < 1e-9 {
            r as i64 - 1
        } else {
            q.floor() as i64
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.resolution_m, (row as f64 + 0.5) * self.resolution_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub image_width_px: usize,
    pub image_height_px: usize,
    pub gsd_m: f64,
    pub altitude_m: f64,
    pub noise_sigma: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { image_width_px: 100, image_height_px: 100, gsd_m: 0.15, altitude_m: 30.0, noise_sigma: 0.05 }
    }
}

impl CameraConfig {
    pub fn footprint_width_m(&self) -> f64 {
        self.image_width_px as f64 * self.gsd_m
    }

    pub fn footprint_height_m(&self) -> f64 {
        self.image_height_px as f64 * self.gsd_m
    }

    /// Footprint side in cells, `round(W·gsd / resolution)` per axis.
    pub fn footprint_cells_dims(&self, resolution_m: f64) -> (usize, usize) {
        (
            (self.footprint_width_m() / resolution_m).round() as usize,
            (self.footprint_height_m() / resolution_m).round() as usize,
        )
    }

    /// Checks that one pixel spans an integer number of cells or one cell an
    /// integer number of pixels.
    pub fn check_against(&self, resolution_m: f64) -> Result<()> {
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if !(self.gsd_m > 0.0) || !(resolution_m > 0.0) {
            return Err(Error::InvalidArgument("gsd and resolution must be positive".into()));
        }
        if !(self.altitude_m > 0.0) {
            return Err(Error::InvalidArgument("altitude must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be non-negative".into()));
        }
        let ratio = self.gsd_m / resolution_m;
        let integral = |r: f64| r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-6;
        if !(integral(ratio) || integral(1.0 / ratio)) {
            return Err(Error::InvalidArgument(format!(
                "gsd {} m is not an integer multiple or divisor of the raster resolution {} m",
                self.gsd_m, resolution_m
            )));
        }
        Ok(())
    }
}

/// Footprint offset of the cell that pixel `p` (of `pixels` along the axis)
/// projects to when the footprint spans `cells`. Picks the cell under the pixel
/// center, ties toward the lower index.
pub fn pixel_to_cell_offset(p: usize, pixels: usize, cells: usize) -> usize {
    let num = (2 * p + 1) * cells;
    let den = 2 * pixels;
    num.div_ceil(den) - 1
}

/// Pixel covering footprint offset `c` when pixels are coarser than cells.
pub fn cell_to_pixel_offset(c: usize, pixels: usize, cells: usize) -> usize {
    c * pixels / cells
}

/// Ground truth terrain: per-cell labels and the appearance the camera sees.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainRaster {
    pub geometry: GridGeometry,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub labels: Vec<u16>,
    /// Row-major, `feature_dim` values per cell.
    pub appearance: Vec<f64>,
}

impl TerrainRaster {
    pub fn new(
        geometry: GridGeometry,
        num_classes: usize,
        feature_dim: usize,
        labels: Vec<u16>,
        appearance: Vec<f64>,
    ) -> Result<Self> {
        if geometry.width == 0 || geometry.height == 0 || !(geometry.resolution_m > 0.0) {
            return Err(Error::InvalidArgument("raster needs positive dimensions and resolution".into()));
        }
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::InvalidArgument("num_classes and feature_dim must be positive".into()));
        }
        if labels.len() != geometry.cells() || appearance.len() != geometry.cells() * feature_dim {
            return Err(Error::InvalidArgument("label/appearance length does not match the grid".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self { geometry, num_classes, feature_dim, labels, appearance })
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn label(&self, col: usize, row: usize) -> u16 {
        self.labels[self.geometry.index(col, row)]
    }

    pub fn appearance_of(&self, col: usize, row: usize) -> &[f64] {
        let i = self.geometry.index(col, row) * self.feature_dim;
        &self.appearance[i..i + self.feature_dim]
    }

    pub fn class_fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts.iter().map(|&c| c as f64 / self.labels.len() as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainParams {
    pub seed: u64,
    pub width_cells: usize,
    pub height_cells: usize,
    pub num_classes: usize,
    /// Typical blob diameter in cells.
    pub blob_scale: f64,
    #[serde(default = "default_resolution")]
    pub resolution_m: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// Minimum Euclidean distance between class prototypes.
    #[serde(default = "default_separation")]
    pub prototype_separation: f64,
    /// Class `k` receives blob sites with relative weight `class_decay^k`.
    #[serde(default = "default_class_decay")]
    pub class_decay: f64,
    /// Std-dev of a per-region appearance offset added to the class prototype.
    #[serde(default)]
    pub region_variation: f64,
}

fn default_resolution() -> f64 {
    0.15
}
fn default_feature_dim() -> usize {
    3
}
fn default_separation() -> f64 {
    0.35
}
fn default_class_decay() -> f64 {
    1.0
}

impl TerrainParams {
    pub fn new(seed: u64, width_cells: usize, height_cells: usize, num_classes: usize, blob_scale: f64) -> Self {
        Self {
            seed,
            width_cells,
            height_cells,
            num_classes,
            blob_scale,
            resolution_m: default_resolution(),
            feature_dim: default_feature_dim(),
            prototype_separation: default_separation(),
            class_decay: default_class_decay(),
            region_variation: 0.0,
        }
    }
}

/// Class prototypes in `[0, 1]^D`, rejection-sampled to keep pairwise distance
/// at least `separation` (relaxed geometrically if the cube is too crowded).
fn sample_prototypes(rng: &mut seed::SimRng, num_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut sep = separation;
    loop {
        let mut protos: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
        let mut attempts = 0;
        while protos.len() < num_classes && attempts < 10_000 {
            attempts += 1;
            let cand: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let ok = protos.iter().all(|p| {
                p.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep
            });
            if ok {
                protos.push(cand);
            }
        }
        if protos.len() == num_classes {
            return protos;
        }
        sep *= 0.9;
    }
}

/// Generates a blob-structured terrain: Voronoi regions around random sites,
/// each site carrying one class. A cell's appearance is its class prototype
/// plus its region's Gaussian offset (zero unless `region_variation > 0`).
/// Every class covers at least 1% of the cells.
pub fn generate_synthetic_terrain(params: &TerrainParams) -> Result<TerrainRaster> {
    let TerrainParams { seed, width_cells: w, height_cells: h, num_classes: c, blob_scale, .. } = *params;
    if c < 2 {
        return Err(Error::InvalidArgument(format!("num_classes must be >= 2, got {c}")));
    }
    if c > u16::MAX as usize {
        return Err(Error::InvalidArgument("too many classes".into()));
    }
    if !(blob_scale > 0.0) {
        return Err(Error::InvalidArgument("blob_scale must be positive".into()));
    }
    if w < MIN_SIDE_CELLS || h < MIN_SIDE_CELLS {
        return Err(Error::InvalidArgument(format!(
            "terrain of {w}x{h} cells is degenerate (need >= {MIN_SIDE_CELLS} per side)"
        )));
    }
    if !(params.resolution_m > 0.0) || params.feature_dim == 0 {
        return Err(Error::InvalidArgument("resolution and feature_dim must be positive".into()));
    }
    if !(params.class_decay > 0.0) {
        return Err(Error::InvalidArgument("class_decay must be positive".into()));
    }
    if !(params.region_variation >= 0.0) || !params.region_variation.is_finite() {
        return Err(Error::InvalidArgument("region_variation must be finite and non-negative".into()));
    }
    if 100 * c > w * h {
        return Err(Error::InvalidArgument("too many classes for 1% coverage each".into()));
    }

    let mut rng = seed::rng(seed);
    let protos = sample_prototypes(&mut rng, c, params.feature_dim, params.prototype_separation);

    let n_sites = ((w * h) as f64 / (blob_scale * blob_scale)).round().max((2 * c) as f64) as usize;
    let weights: Vec<f64> = (0..c).map(|k| params.class_decay.powi(k as i32)).collect();
    let total_w: f64 = weights.iter().sum();
    let mut sites: Vec<(f64, f64, usize)> = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        let x = rng.random::<f64>() * w as f64;
        let y = rng.random::<f64>() * h as f64;
        let class = if i < c {
            i
        } else {
            let mut u = rng.random::<f64>() * total_w;
            let mut k = 0;
            while k + 1 < c && u >= weights[k] {
                u -= weights[k];
                k += 1;
            }
            k
        };
        sites.push((x, y, class));
    }

    let mut owner = vec![0usize; w * h];
    for row in 0..h {
        for col in 0..w {
            let (cx, cy) = (col as f64 + 0.5, row as f64 + 0.5);
            let mut best = (f64::INFINITY, 0usize);
            for (s, &(sx, sy, _)) in sites.iter().enumerate() {
                let d = (sx - cx) * (sx - cx) + (sy - cy) * (sy - cy);
                if d < best.0 {
                    best = (d, s);
                }
            }
            owner[row * w + col] = best.1;
        }
    }

    let mut site_area = vec![0usize; n_sites];
    for &o in &owner {
        site_area[o] += 1;
    }
    let min_cells = (w * h).div_ceil(100);
    let class_counts = |sites: &[(f64, f64, usize)]| {
        let mut counts = vec![0usize; c];
        for (s, &(_, _, k)) in sites.iter().enumerate() {
            counts[k] += site_area[s];
        }
        counts
    };
    // Reassign the largest affordable donor site to any class below 1%.
    for _ in 0..=n_sites {
        let counts = class_counts(&sites);
        let Some(poor) = (0..c).find(|&k| counts[k] < min_cells) else { break };
        let donor = (0..n_sites)
            .filter(|&s| {
                let k = sites[s].2;
                k != poor && site_area[s] > 0 && counts[k] - site_area[s] >= min_cells
            })
            .max_by_key(|&s| (site_area[s], std::cmp::Reverse(s)));
        match donor {
            Some(s) => sites[s].2 = poor,
            None => return Err(Error::InvalidArgument("cannot give every class 1% coverage".into())),
        }
    }
    if class_counts(&sites).iter().any(|&n| n < min_cells) {
        return Err(Error::InvalidArgument("cannot give every class 1% coverage".into()));
    }

    let d = params.feature_dim;
    let mut offsets = vec![0.0; n_sites * d];
    if params.region_variation > 0.0 {
        let normal = Normal::new(0.0, params.region_variation).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        offsets.iter_mut().for_each(|o| *o = normal.sample(&mut rng));
    }
    let labels: Vec<u16> = owner.iter().map(|&s| sites[s].2 as u16).collect();
    let appearance: Vec<f64> = owner
        .iter()
        .flat_map(|&s| (0..d).map(move |j| (s, j)))
        .map(|(s, j)| protos[sites[s].2][j] + offsets[s * d + j])
        .collect();
    let geometry = GridGeometry { width: w, height: h, resolution_m: params.resolution_m };
    TerrainRaster::new(geometry, c, params.feature_dim, labels, appearance)
}

/// Cell rectangle imaged from `pose`: `round(W·gsd / resolution)` cells per
/// side, centered on the cell containing `(pose.x, pose.y)`.
pub fn footprint_cells(camera: &CameraConfig, pose: &Pose, geometry: &GridGeometry) -> Result<CellRect> {
    let (cols, rows) = camera.footprint_cells_dims(geometry.resolution_m);
    let cx = geometry.axis_cell(pose.x);
    let cy = geometry.axis_cell(pose.y);
    let col0 = cx - (cols / 2) as i64;
    let row0 = cy - (rows / 2) as i64;
    let inside = pose.x.is_finite()
        && pose.y.is_finite()
        && col0 >= 0
        && row0 >= 0
        && col0 as usize + cols <= geometry.width
        && row0 as usize + rows <= geometry.height;
    if !inside {
        let suggestion = Workspace::new(geometry, camera, &geometry.full_rect())
            .map(|ws| ws.clamp(pose))
            .unwrap_or(*pose);
        return Err(Error::OutOfBounds { x: pose.x, y: pose.y, suggestion });
    }
    Ok(CellRect::new(col0 as usize, row0 as usize, cols, rows))
}

/// Per-pixel data of one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
    pub feature_dim: usize,
    /// `height × width × feature_dim`, row-major by pixel row.
    pub features: Vec<f64>,
    pub gt_labels: Vec<u16>,
    pub footprint: CellRect,
}

impl ImageSample {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn feature(&self, px: usize, py: usize) -> &[f64] {
        let i = (py * self.width + px) * self.feature_dim;
        &self.features[i..i + self.feature_dim]
    }

    /// Terrain cell the pixel projects to.
    pub fn pixel_cell(&self, px: usize, py: usize) -> (usize, usize) {
        (
            self.footprint.col0 + pixel_to_cell_offset(px, self.width, self.footprint.cols),
            self.footprint.row0 + pixel_to_cell_offset(py, self.height, self.footprint.rows),
        )
    }
}

/// Simulates a nadir capture: nearest-cell resampling of the appearance plus
/// zero-mean Gaussian sensor noise.
pub fn capture_image(raster: &TerrainRaster, camera: &CameraConfig, pose: &Pose, rng_seed: u64) -> Result<ImageSample> {
    camera.check_against(raster.geometry.resolution_m)?;
    let footprint = footprint_cells(camera, pose, &raster.geometry)?;
    let (w, h, d) = (camera.image_width_px, camera.image_height_px, raster.feature_dim);
    let mut features = Vec::with_capacity(w * h * d);
    let mut gt_labels = Vec::with_capacity(w * h);
    for py in 0..h {
        let row = footprint.row0 + pixel_to_cell_offset(py, h, footprint.rows);
        for px in 0..w {
            let col = footprint.col0 + pixel_to_cell_offset(px, w, footprint.cols);
            features.extend_from_slice(raster.appearance_of(col, row));
            gt_labels.push(raster.label(col, row));
        }
    }
    if camera.noise_sigma > 0.0 {
        let mut rng = seed::rng(rng_seed);
        let noise = Normal::new(0.0, camera.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for f in &mut features {
            *f += noise.sample(&mut rng);
        }
    }
    Ok(ImageSample { pose: *pose, width: w, height: h, feature_dim: d, features, gt_labels, footprint })
}

/// Rectangle of valid capture positions: every pose inside keeps the camera
/// footprint within `area`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub altitude_m: f64,
    pub geometry: GridGeometry,
    pub area: CellRect,
}

impl Workspace {
    pub fn new(geometry: &GridGeometry, camera: &CameraConfig, area: &CellRect) -> Result<Self> {
        let (cols, rows) = camera.footprint_cells_dims(geometry.resolution_m);
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidArgument("footprint is smaller than one cell".into()));
        }
        if cols > area.cols || rows > area.rows || !geometry.full_rect().contains_rect(area) {
            return Err(Error::InvalidArgument(format!(
                "footprint of {cols}x{rows} cells does not fit the {}x{} area",
                area.cols, area.rows
            )));
        }
        let c_min = area.col0 + cols / 2;
        let c_max = area.col_end() - cols + cols / 2;
        let r_min = area.row0 + rows / 2;
        let r_max = area.row_end() - rows + rows / 2;
        let res = geometry.resolution_m;
        Ok(Self {
            x_min: (c_min as f64 + 0.5) * res,
            x_max: (c_max as f64 + 0.5) * res,
            y_min: (r_min as f64 + 0.5) * res,
            y_max: (r_max as f64 + 0.5) * res,
            altitude_m: camera.altitude_m,
            geometry: *geometry,
            area: *area,
        })
    }

    pub fn clamp(&self, pose: &Pose) -> Pose {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_nan() { lo } else { v.clamp(lo, hi) };
        Pose::new(fix(pose.x, self.x_min, self.x_max), fix(pose.y, self.y_min, self.y_max), self.altitude_m)
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        pose.x >= self.x_min && pose.x <= self.x_max && pose.y >= self.y_min && pose.y <= self.y_max
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Pose {
        Pose::new(
            self.x_min + rng.random::<f64>() * (self.x_max - self.x_min),
            self.y_min + rng.random::<f64>() * (self.y_max - self.y_min),
            self.altitude_m,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_terrain() -> TerrainRaster {
        let mut p = TerrainParams::new(7, 64, 48, 3, 12.0);
        p.resolution_m = 1.0;
        generate_synthetic_terrain(&p).unwrap()
    }

    #[test]
    fn generated_classes_each_cover_one_percent() {
        let r = generate_synthetic_terrain(&TerrainParams::new(7, 128, 128, 4, 20.0)).unwrap();
        for f in r.class_fractions() {
            assert!(f >= 0.01, "fraction {f}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = TerrainParams::new(7, 128, 128, 4, 20.0);
        assert_eq!(generate_synthetic_terrain(&p).unwrap(), generate_synthetic_terrain(&p).unwrap());
        let mut q = p.clone();
        q.seed = 8;
        assert_ne!(generate_synthetic_terrain(&p).unwrap().labels, generate_synthetic_terrain(&q).unwrap().labels);
    }

    #[test]
    fn generation_rejects_bad_parameters() {
        assert!(generate_synthetic_terrain(&TerrainParams::new(7, 128, 128, 1, 20.0)).is_err());
        assert!(generate_synthetic_terrain(&TerrainParams::new(7, 15, 128, 4, 20.0)).is_err());
        assert!(generate_synthetic_terrain(&TerrainParams::new(7, 128, 128, 4, 0.0)).is_err());
    }

    #[test]
    fn appearance_is_class_prototype() {
        let r = small_terrain();
        let mut proto: Vec<Option<Vec<f64>>> = vec![None; r.num_classes];
        for row in 0..r.height() {
            for col in 0..r.width() {
                let l = r.label(col, row) as usize;
                let a = r.appearance_of(col, row).to_vec();
                match &proto[l] {
                    Some(p) => assert_eq!(p, &a),
                    None => proto[l] = Some(a),
                }
            }
        }
    }

    #[test]
    fn footprint_matches_gsd_ratio() {
        let geo = GridGeometry { width: 400, height: 400, resolution_m: 0.15 };
        let cam = CameraConfig { image_width_px: 100, image_height_px: 100, gsd_m: 0.15, ..Default::default() };
        let fp = footprint_cells(&cam, &Pose::new(30.0, 30.0, 30.0), &geo).unwrap();
        assert_eq!((fp.cols, fp.rows), (100, 100));
        let cam = CameraConfig { image_width_px: 50, image_height_px: 50, gsd_m: 0.3, ..Default::default() };
        let fp = footprint_cells(&cam, &Pose::new(30.0, 30.0, 30.0), &geo).unwrap();
        assert_eq!((fp.cols, fp.rows), (100, 100));
    }

    #[test]
    fn boundary_pose_breaks_toward_lower_cell() {
        let geo = GridGeometry { width: 40, height: 40, resolution_m: 1.0 };
        assert_eq!(geo.axis_cell(10.0), 9);
        assert_eq!(geo.axis_cell(10.5), 10);
        let geo = GridGeometry { width: 400, height: 400, resolution_m: 0.15 };
        // 30 / 0.15 is not exactly 200 in floating point; still a boundary.
        assert_eq!(geo.axis_cell(30.0), 199);
        let cam = CameraConfig { image_width_px: 4, image_height_px: 4, gsd_m: 0.15, ..Default::default() };
        let fp = footprint_cells(&cam, &Pose::new(30.0, 30.0, 30.0), &geo).unwrap();
        assert_eq!((fp.col0, fp.row0), (197, 197));
    }

    #[test]
    fn capture_without_noise_equals_appearance() {
        let r = small_terrain();
        let cam = CameraConfig { image_width_px: 8, image_height_px: 8, gsd_m: 1.0, altitude_m: 30.0, noise_sigma: 0.0 };
        let img = capture_image(&r, &cam, &Pose::new(20.5, 20.5, 30.0), 1).unwrap();
        for py in 0..8 {
            for px in 0..8 {
                let (c, rr) = img.pixel_cell(px, py);
                assert_eq!(img.feature(px, py), r.appearance_of(c, rr));
                assert_eq!(img.gt_labels[py * 8 + px], r.label(c, rr));
            }
        }
    }

    #[test]
    fn corner_capture_is_rejected_with_suggestion() {
        let r = small_terrain();
        let cam = CameraConfig { image_width_px: 8, image_height_px: 8, gsd_m: 1.0, altitude_m: 30.0, noise_sigma: 0.0 };
        match capture_image(&r, &cam, &Pose::new(1.0, 1.0, 30.0), 1) {
            Err(Error::OutOfBounds { suggestion, .. }) => {
                assert!(footprint_cells(&cam, &suggestion, &r.geometry).is_ok());
            }
            other => panic!("expected out-of-bounds, got {other:?}"),
        }
    }

    #[test]
    fn noise_std_matches_sigma() {
        let mut p = TerrainParams::new(3, 96, 96, 3, 16.0);
        p.resolution_m = 1.0;
        let r = generate_synthetic_terrain(&p).unwrap();
        let cam = CameraConfig { image_width_px: 64, image_height_px: 64, gsd_m: 1.0, altitude_m: 30.0, noise_sigma: 0.1 };
        let img = capture_image(&r, &cam, &Pose::new(48.0, 48.0, 30.0), 99).unwrap();
        let mut diffs = Vec::new();
        for py in 0..64 {
            for px in 0..64 {
                let (c, rr) = img.pixel_cell(px, py);
                for (a, b) in img.feature(px, py).iter().zip(r.appearance_of(c, rr)) {
                    diffs.push(a - b);
                }
            }
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.1).abs() < 0.005, "std {std}");
        assert_eq!(img, capture_image(&r, &cam, &Pose::new(48.0, 48.0, 30.0), 99).unwrap());
    }

    #[test]
    fn coarse_pixels_project_to_single_cells() {
        let r = small_terrain();
        let cam = CameraConfig { image_width_px: 5, image_height_px: 5, gsd_m: 2.0, altitude_m: 30.0, noise_sigma: 0.0 };
        let img = capture_image(&r, &cam, &Pose::new(30.0, 24.0, 30.0), 0).unwrap();
        assert_eq!((img.footprint.cols, img.footprint.rows), (10, 10));
        assert_eq!(pixel_to_cell_offset(0, 5, 10), 0);
        assert_eq!(pixel_to_cell_offset(4, 5, 10), 8);
        assert_eq!(pixel_to_cell_offset(3, 4, 2), 1);
        assert_eq!(pixel_to_cell_offset(2, 4, 2), 1);
        assert_eq!(pixel_to_cell_offset(1, 4, 2), 0);
    }

    #[test]
    fn gsd_must_be_integer_related() {
        let cam = CameraConfig { gsd_m: 0.2, ..Default::default() };
        assert!(cam.check_against(0.15).is_err());
        let cam = CameraConfig { gsd_m: 0.3, ..Default::default() };
        assert!(cam.check_against(0.15).is_ok());
        assert!(cam.check_against(0.6).is_ok());
    }

    #[test]
    fn workspace_clamp_keeps_footprint_inside() {
        let geo = GridGeometry { width: 50, height: 40, resolution_m: 1.0 };
        let cam = CameraConfig { image_width_px: 10, image_height_px: 10, gsd_m: 1.0, altitude_m: 30.0, noise_sigma: 0.0 };
        let ws = Workspace::new(&geo, &cam, &geo.full_rect()).unwrap();
        for &(x, y) in &[(-5.0, -5.0), (100.0, 100.0), (ws.x_min, ws.y_max), (25.0, 0.0)] {
            let p = ws.clamp(&Pose::new(x, y, 30.0));
            let fp = footprint_cells(&cam, &p, &geo).unwrap();
            assert!(geo.full_rect().contains_rect(&fp));
        }
    }
}
