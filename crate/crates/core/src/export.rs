//! File outputs: binary grid files, PNG renders and CSV tables.
//!
//! Grid file layout (all little-endian):
//!
//! ```text
//! magic        4 bytes  "GRID"
//! version      u32      1
//! width        u32
//! height       u32
//! num_classes  u32
//! channels     u32
//! resolution   f64      meters per cell
//! labels       u16 × width·height            row-major, row 0 = south
//! values       f64 × width·height·channels   row-major, channels innermost
//! ```
//!
//! The label value `0xFFFF` marks an unobserved cell in map snapshots.

use std::io::Write;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mapping::BeliefMaps;
use crate::terrain::{GridGeometry, Pose, TerrainRaster};

pub const GRID_MAGIC: &[u8; 4] = b"GRID";
pub const GRID_VERSION: u32 = 1;
pub const UNOBSERVED: u16 = u16::MAX;

/// Label grid plus per-cell value channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub geometry: GridGeometry,
    pub num_classes: usize,
    pub channels: usize,
    pub labels: Vec<u16>,
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn from_terrain(r: &TerrainRaster) -> Self {
        Self {
            geometry: r.geometry,
            num_classes: r.num_classes,
            channels: r.feature_dim,
            labels: r.labels.clone(),
            values: r.appearance.clone(),
        }
    }

    /// Argmax labels (unobserved marked), with uncertainty and hit channels.
    pub fn from_maps(m: &BeliefMaps) -> Self {
        let n = m.geometry.cells();
        let labels = (0..n).map(|i| if m.hits[i] == 0 { UNOBSERVED } else { m.argmax_class(i) as u16 }).collect();
        let values = (0..n).flat_map(|i| [m.uncertainty[i], m.hits[i] as f64]).collect();
        Self { geometry: m.geometry, num_classes: m.num_classes, channels: 2, labels, values }
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(32 + 2 * self.labels.len() + 8 * self.values.len());
        out.extend_from_slice(GRID_MAGIC);
        for v in [GRID_VERSION, g.width as u32, g.height as u32, self.num_classes as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&g.resolution_m.to_le_bytes());
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format { path: origin.to_path_buf(), reason: reason.into() };
        if bytes.len() < 32 || &bytes[..4] != GRID_MAGIC {
            return Err(bad("bad magic or truncated header"));
        }
        let u = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if u(0) != GRID_VERSION as usize {
            return Err(bad(&format!("unsupported version {}", u(0))));
        }
        let (w, h, c, ch) = (u(1), u(2), u(3), u(4));
        let resolution_m = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let n = w.checked_mul(h).ok_or_else(|| bad("size overflow"))?;
        let expected = 32 + 2 * n + 8 * n * ch;
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let labels = bytes[32..32 + 2 * n].chunks(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        let values = bytes[32 + 2 * n..].chunks(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Self {
            geometry: GridGeometry { width: w, height: h, resolution_m },
            num_classes: c,
            channels: ch,
            labels,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?, path)
    }

    pub fn to_terrain(&self) -> Result<TerrainRaster> {
        TerrainRaster::new(self.geometry, self.num_classes, self.channels, self.labels.clone(), self.values.clone())
    }
}

/// Fixed class colours; class `k` uses `PALETTE[k % len]`.
pub const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [44, 160, 44],
    [214, 39, 40],
    [255, 221, 87],
    [148, 103, 189],
    [23, 190, 207],
    [140, 86, 75],
    [227, 119, 194],
    [188, 189, 34],
    [255, 255, 255],
];
pub const UNOBSERVED_GREY: [u8; 3] = [128, 128, 128];
pub const PATH_ORANGE: [u8; 3] = [255, 140, 0];

pub fn class_color(label: u16) -> [u8; 3] {
    if label == UNOBSERVED {
        UNOBSERVED_GREY
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

/// Pixels per cell so the longer side is at least 256 px.
pub fn default_scale(geometry: &GridGeometry) -> u32 {
    (256 / geometry.width.max(geometry.height).max(1)).max(1) as u32
}

fn paint_cells(geometry: &GridGeometry, scale: u32, mut color: impl FnMut(usize) -> [u8; 3]) -> RgbImage {
    let (w, h) = (geometry.width as u32, geometry.height as u32);
    let mut img = RgbImage::new(w * scale, h * scale);
    for row in 0..h {
        for col in 0..w {
            let c = Rgb(color(geometry.index(col as usize, row as usize)));
            // north up: grid row 0 is the bottom image row
            let top = (h - 1 - row) * scale;
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(col * scale + dx, top + dy, c);
                }
            }
        }
    }
    img
}

pub fn render_labels(geometry: &GridGeometry, labels: &[u16], scale: u32) -> RgbImage {
    paint_cells(geometry, scale, |i| class_color(labels[i]))
}

/// Argmax semantic map with unobserved cells grey.
pub fn render_semantic_map(maps: &BeliefMaps, scale: u32) -> RgbImage {
    render_labels(&maps.geometry, &GridFile::from_maps(maps).labels, scale)
}

/// Dark-blue → teal → yellow ramp over `[0, 1]`.
pub fn heat_color(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] =
        [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        out[k] = (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    }
    out
}

pub fn render_heat(geometry: &GridGeometry, values: &[f64], lo: f64, hi: f64, scale: u32) -> RgbImage {
    let span = if hi > lo { hi - lo } else { 1.0 };
    paint_cells(geometry, scale, |i| heat_color((values[i] - lo) / span))
}

/// Uncertainty layer on `[0, 1]`, unobserved cells grey.
pub fn render_uncertainty_map(maps: &BeliefMaps, scale: u32) -> RgbImage {
    paint_cells(&maps.geometry, scale, |i| {
        if maps.hits[i] == 0 {
            UNOBSERVED_GREY
        } else {
            heat_color(maps.uncertainty[i])
        }
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

pub fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_cross(img: &mut RgbImage, (x, y): (i64, i64), r: i64, c: [u8; 3]) {
    for d in -r..=r {
        put(img, x + d, y + d, c);
        put(img, x + d, y - d, c);
    }
}

/// Orange flight path with black crosses at the capture positions.
pub fn overlay_path(img: &mut RgbImage, geometry: &GridGeometry, scale: u32, poses: &[Pose]) {
    let to_px = |p: &Pose| {
        let s = scale as f64 / geometry.resolution_m;
        ((p.x * s).floor() as i64, img.height() as i64 - 1 - (p.y * s).floor() as i64)
    };
    let pts: Vec<(i64, i64)> = poses.iter().map(to_px).collect();
    for w in pts.windows(2) {
        draw_line(img, w[0], w[1], PATH_ORANGE);
    }
    let r = (scale as i64 * 2).max(2);
    for &p in &pts {
        draw_cross(img, p, r, [0, 0, 0]);
    }
}

/// One line series for [`render_line_plot`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub color: [u8; 3],
    pub points: Vec<(f64, f64)>,
    /// Optional ± band drawn in a lighter tint.
    pub spread: Vec<f64>,
}

/// Plots series in a `width × height` panel with axes from the data range and
/// `y ∈ [y_lo, y_hi]`.
pub fn render_line_plot(series: &[Series], y_lo: f64, y_hi: f64, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 24i64;
    let (x_min, x_max) = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min { (x_min, x_max) } else { (0.0, 1.0) };
    let (w, h) = (width as i64 - 2 * margin, height as i64 - 2 * margin);
    let to_px = |x: f64, y: f64| {
        let fx = (x - x_min) / (x_max - x_min);
        let fy = ((y - y_lo) / (y_hi - y_lo)).clamp(0.0, 1.0);
        (margin + (fx * w as f64).round() as i64, margin + h - (fy * h as f64).round() as i64)
    };
    for k in 0..=4 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        draw_line(&mut img, to_px(x_min, y), to_px(x_max, y), [225, 225, 225]);
    }
    draw_line(&mut img, to_px(x_min, y_lo), to_px(x_max, y_lo), [0, 0, 0]);
    draw_line(&mut img, to_px(x_min, y_lo), to_px(x_min, y_hi), [0, 0, 0]);
    for s in series {
        let tint = s.color.map(|c| ((c as u16 + 2 * 255) / 3) as u8);
        for (i, w2) in s.points.windows(2).enumerate() {
            if let (Some(&a), Some(&b)) = (s.spread.get(i), s.spread.get(i + 1)) {
                for sign in [-1.0, 1.0] {
                    draw_line(&mut img, to_px(w2[0].0, w2[0].1 + sign * a), to_px(w2[1].0, w2[1].1 + sign * b), tint);
                }
            }
        }
        for w2 in s.points.windows(2) {
            draw_line(&mut img, to_px(w2[0].0, w2[0].1), to_px(w2[1].0, w2[1].1), s.color);
        }
    }
    img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_synthetic_terrain, TerrainParams};

    #[test]
    fn terrain_grid_round_trip() {
        let r = generate_synthetic_terrain(&TerrainParams::new(1, 32, 20, 3, 6.0)).unwrap();
        let g = GridFile::from_terrain(&r);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.grid");
        g.save(&p).unwrap();
        let back = GridFile::load(&p).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_terrain().unwrap(), r);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"GRID");
        assert_eq!(bytes.len(), 32 + 2 * 640 + 8 * 640 * 3);
        assert!(GridFile::decode(&bytes[..bytes.len() - 1], &p).is_err());
    }

    #[test]
    fn unobserved_cells_render_grey_and_north_is_up() {
        let geo = GridGeometry { width: 4, height: 3, resolution_m: 1.0 };
        let mut maps = BeliefMaps::new(geo, 2, 1.0, 1.0).unwrap();
        maps.hits[0] = 1;
        maps.mean[0] = 0.2;
        maps.mean[1] = 0.8;
        let img = render_semantic_map(&maps, 1);
        assert_eq!(img.get_pixel(0, 2).0, PALETTE[1]);
        assert_eq!(img.get_pixel(0, 0).0, UNOBSERVED_GREY);
    }

    #[test]
    fn heat_ramp_ends() {
        assert_eq!(heat_color(0.0), [68, 1, 84]);
        assert_eq!(heat_color(1.0), [253, 231, 37]);
        assert_eq!(heat_color(f64::NAN), heat_color(0.0));
    }

    #[test]
    fn path_overlay_marks_captures() {
        let geo = GridGeometry { width: 40, height: 40, resolution_m: 1.0 };
        let mut img = RgbImage::new(40, 40);
        overlay_path(&mut img, &geo, 1, &[Pose::new(5.5, 5.5, 30.0), Pose::new(30.5, 5.5, 30.0)]);
        assert_eq!(img.get_pixel(18, 34).0, PATH_ORANGE);
        assert_eq!(img.get_pixel(5, 34).0, [0, 0, 0]);
    }
}
