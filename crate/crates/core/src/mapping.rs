//! Global terrain belief: per-class semantic layers fused with independent
//! scalar Kalman filters, a latest-estimate model-uncertainty layer and a hit
//! counter.

use serde::{Deserialize, Serialize};

use crate::bayes::PredictiveOutput;
use crate::error::{Error, Result};
use crate::terrain::{cell_to_pixel_offset, pixel_to_cell_offset, CellRect, GridGeometry};

/// Default lower bound on the measurement variance.
pub const DEFAULT_R_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    /// Prior semantic variance ε, in (0, 1].
    #[serde(default = "default_prior_var")]
    pub prior_var: f64,
    /// Uncertainty assumed for never-observed cells.
    #[serde(default = "default_u_prior")]
    pub u_prior: f64,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    /// Keep the maps across missions instead of re-initialising them.
    #[serde(default)]
    pub persist_maps: bool,
}

fn default_prior_var() -> f64 {
    1.0
}
fn default_u_prior() -> f64 {
    1.0
}
fn default_r_min() -> f64 {
    DEFAULT_R_MIN
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self { prior_var: 1.0, u_prior: 1.0, r_min: DEFAULT_R_MIN, persist_maps: false }
    }
}

/// One projected network output, aggregated per footprint cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub footprint: CellRect,
    pub num_classes: usize,
    /// `cells × C`, row-major over the footprint.
    pub probs: Vec<f64>,
    pub mi: Vec<f64>,
    /// `cells × C` measurement variance.
    pub noise_var: Vec<f64>,
}

/// Pixel offsets covering each cell offset along one axis.
fn covering_pixels(pixels: usize, cells: usize) -> Vec<Vec<usize>> {
    let mut cover = vec![Vec::new(); cells];
    if pixels >= cells {
        for p in 0..pixels {
            cover[pixel_to_cell_offset(p, pixels, cells)].push(p);
        }
    } else {
        for (c, list) in cover.iter_mut().enumerate() {
            list.push(cell_to_pixel_offset(c, pixels, cells));
        }
    }
    cover
}

/// Averages pixel predictions onto the footprint cells: mean (renormalised)
/// class probabilities, mean MI and mean MC variance clamped below by `r_min`.
pub fn project_prediction(
    output: &PredictiveOutput,
    footprint: &CellRect,
    geometry: &GridGeometry,
    r_min: f64,
) -> Result<Measurement> {
    if !geometry.full_rect().contains_rect(footprint) {
        return Err(Error::InvalidArgument(format!("footprint {footprint:?} lies outside the grid")));
    }
    if !(r_min > 0.0) {
        return Err(Error::InvalidArgument("r_min must be positive".into()));
    }
    let c = output.num_classes;
    let xs = covering_pixels(output.width, footprint.cols);
    let ys = covering_pixels(output.height, footprint.rows);
    let n = footprint.area();
    let mut probs = vec![0.0; n * c];
    let mut mi = vec![0.0; n];
    let mut noise_var = vec![0.0; n * c];
    for (cy, py_list) in ys.iter().enumerate() {
        for (cx, px_list) in xs.iter().enumerate() {
            let cell = cy * footprint.cols + cx;
            let count = (py_list.len() * px_list.len()) as f64;
            let (s, v) = (&mut probs[cell * c..(cell + 1) * c], &mut noise_var[cell * c..(cell + 1) * c]);
            for &py in py_list {
                for &px in px_list {
                    let pixel = py * output.width + px;
                    for k in 0..c {
                        s[k] += output.probs[pixel * c + k];
                        v[k] += output.mc_variance[pixel * c + k];
                    }
                    mi[cell] += output.mi[pixel];
                }
            }
            let total: f64 = s.iter().sum();
            for k in 0..c {
                s[k] /= total;
                v[k] = (v[k] / count).max(r_min);
            }
            mi[cell] = (mi[cell] / count).clamp(0.0, 1.0);
        }
    }
    Ok(Measurement { footprint: *footprint, num_classes: c, probs, mi, noise_var })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSums {
    pub sum_uncertainty: f64,
    pub sum_hits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMaps {
    pub geometry: GridGeometry,
    pub num_classes: usize,
    /// `cells × C` semantic means.
    pub mean: Vec<f64>,
    /// `cells × C` semantic variances.
    pub var: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub hits: Vec<u32>,
    pub prior_var: f64,
    pub u_prior: f64,
}

impl BeliefMaps {
    /// Prior map: mean `1/C`, variance `ε`, uncertainty `u_prior`, zero hits.
    pub fn new(geometry: GridGeometry, num_classes: usize, prior_var: f64, u_prior: f64) -> Result<Self> {
        if !(prior_var > 0.0 && prior_var <= 1.0) {
            return Err(Error::InvalidArgument(format!("prior variance must lie in (0, 1], got {prior_var}")));
        }
        if !(0.0..=1.0).contains(&u_prior) {
            return Err(Error::InvalidArgument(format!("u_prior must lie in [0, 1], got {u_prior}")));
        }
        if num_classes < 1 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        let n = geometry.cells();
        Ok(Self {
            geometry,
            num_classes,
            mean: vec![1.0 / num_classes as f64; n * num_classes],
            var: vec![prior_var; n * num_classes],
            uncertainty: vec![u_prior; n],
            hits: vec![0; n],
            prior_var,
            u_prior,
        })
    }

    fn check_measurement(&self, m: &Measurement) -> Result<()> {
        if !self.geometry.full_rect().contains_rect(&m.footprint) {
            return Err(Error::InvalidArgument("measurement footprint lies outside the map".into()));
        }
        let n = m.footprint.area();
        if m.num_classes != self.num_classes
            || m.probs.len() != n * self.num_classes
            || m.noise_var.len() != n * self.num_classes
            || m.mi.len() != n
        {
            return Err(Error::InvalidArgument("measurement shape does not match the map".into()));
        }
        Ok(())
    }

    /// Per-cell, per-class scalar Kalman update over the footprint.
    pub fn fuse_semantic(&mut self, m: &Measurement) -> Result<()> {
        self.check_measurement(m)?;
        if let Some(r) = m.noise_var.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!("measurement variance must be positive and finite, got {r}")));
        }
        let c = self.num_classes;
        for (k, (col, row)) in m.footprint.cells().enumerate() {
            let cell = self.geometry.index(col, row);
            for j in 0..c {
                let (mu, p) = (&mut self.mean[cell * c + j], &mut self.var[cell * c + j]);
                let r = m.noise_var[k * c + j];
                let gain = *p / (*p + r);
                *mu += gain * (m.probs[k * c + j] - *mu);
                *p *= 1.0 - gain;
            }
        }
        Ok(())
    }

    /// Overwrites the uncertainty of covered cells and counts the hit.
    pub fn update_uncertainty(&mut self, m: &Measurement) -> Result<()> {
        self.check_measurement(m)?;
        for (k, (col, row)) in m.footprint.cells().enumerate() {
            let cell = self.geometry.index(col, row);
            self.uncertainty[cell] = m.mi[k];
            self.hits[cell] += 1;
        }
        Ok(())
    }

    pub fn fuse(&mut self, m: &Measurement) -> Result<()> {
        self.fuse_semantic(m)?;
        self.update_uncertainty(m)
    }

    /// Uncertainty and hit sums over `footprint`; unobserved cells count as
    /// `u_prior`. The footprint is clipped to the grid.
    pub fn region_sums(&self, footprint: &CellRect) -> RegionSums {
        let mut sums = RegionSums { sum_uncertainty: 0.0, sum_hits: 0 };
        let col_end = footprint.col_end().min(self.geometry.width);
        let row_end = footprint.row_end().min(self.geometry.height);
        for row in footprint.row0..row_end {
            for col in footprint.col0..col_end {
                let cell = self.geometry.index(col, row);
                let h = self.hits[cell];
                sums.sum_uncertainty += if h == 0 { self.u_prior } else { self.uncertainty[cell] };
                sums.sum_hits += h as u64;
            }
        }
        sums
    }

    /// Observed cells 4-adjacent to at least one unobserved cell, row-major.
    pub fn frontier_cells(&self) -> Vec<(usize, usize)> {
        self.frontier_cells_in(&self.geometry.full_rect())
    }

    /// Frontier restricted to `area`: neighbours outside it are ignored.
    pub fn frontier_cells_in(&self, area: &CellRect) -> Vec<(usize, usize)> {
        let w = self.geometry.width;
        let unknown = |c: usize, r: usize| area.contains_cell(c, r) && self.hits[r * w + c] == 0;
        let mut out = Vec::new();
        for (c, r) in area.cells() {
            if self.hits[r * w + c] == 0 {
                continue;
            }
            let touches = (c > 0 && unknown(c - 1, r))
                || unknown(c + 1, r)
                || (r > 0 && unknown(c, r - 1))
                || unknown(c, r + 1);
            if touches {
                out.push((c, r));
            }
        }
        out
    }

    pub fn argmax_class(&self, cell: usize) -> usize {
        crate::bayes::argmax(&self.mean[cell * self.num_classes..(cell + 1) * self.num_classes])
    }

    pub fn observed_cells(&self) -> usize {
        self.hits.iter().filter(|&&h| h > 0).count()
    }
}
