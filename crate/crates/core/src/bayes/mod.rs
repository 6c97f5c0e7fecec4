//! Per-pixel Bayesian classifier with MC dropout.
//!
//! The reference model is a one-hidden-layer network over a `k × k` window of
//! pixel features (replicate padding at the image border). Dropout acts on the
//! hidden units and is kept active at test time; averaging `T` stochastic
//! passes gives the posterior predictive, and the spread between passes gives
//! the BALD mutual information used as the acquisition signal.

mod checkpoint;
pub mod metrics;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{evaluate, Metrics};
pub use train::{loss_and_gradient, train, weight_decay_for, Batch, TrainConfig, TrainReport, TrainSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::terrain::ImageSample;

const PASS_STREAM: u64 = 0x5041_5353;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    /// Side of the square context window; odd.
    pub window: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.window * self.window * self.feature_dim
    }

    pub fn num_params(&self) -> usize {
        self.hidden * self.input_dim() + self.hidden + self.num_classes * self.hidden + self.num_classes
    }

    fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden == 0 || self.num_classes < 2 {
            return Err(Error::InvalidArgument("architecture needs feature_dim, hidden >= 1 and >= 2 classes".into()));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("window must be odd, got {}", self.window)));
        }
        Ok(())
    }
}

/// Flat parameter set: `w1` is `hidden × input_dim`, `w2` is `classes × hidden`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Weights {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            w1: vec![0.0; arch.hidden * arch.input_dim()],
            b1: vec![0.0; arch.hidden],
            w2: vec![0.0; arch.num_classes * arch.hidden],
            b2: vec![0.0; arch.num_classes],
        }
    }

    /// Glorot-scaled Gaussian initialisation, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut w = Self::zeros(arch);
        let s1 = (2.0 / (arch.input_dim() + arch.hidden) as f64).sqrt();
        let s2 = (2.0 / (arch.hidden + arch.num_classes) as f64).sqrt();
        for v in &mut w.w1 {
            *v = s1 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        for v in &mut w.w2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = s2 * z;
        }
        w
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(self.b2.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn squared_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Classifier weights plus the frozen checkpoint every mission restarts from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: Architecture,
    /// Dropout rate; `0` makes the model deterministic.
    pub dropout: f64,
    pub weights: Weights,
    pub checkpoint: Weights,
}

impl ModelState {
    pub fn new(arch: Architecture, dropout: f64, seed: u64) -> Result<Self> {
        arch.validate()?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout must lie in [0, 1), got {dropout}")));
        }
        let weights = Weights::init(&arch, seed);
        Ok(Self { arch, dropout, checkpoint: weights.clone(), weights })
    }

    pub fn from_parts(arch: Architecture, dropout: f64, weights: Weights, checkpoint: Weights) -> Result<Self> {
        arch.validate()?;
        let expect = Weights::zeros(&arch);
        let same_shape = |w: &Weights| {
            w.w1.len() == expect.w1.len()
                && w.b1.len() == expect.b1.len()
                && w.w2.len() == expect.w2.len()
                && w.b2.len() == expect.b2.len()
        };
        if !same_shape(&weights) || !same_shape(&checkpoint) {
            return Err(Error::InvalidArgument("weight shapes do not match the architecture".into()));
        }
        if !weights.all_finite() || !checkpoint.all_finite() {
            return Err(Error::InvalidArgument("weights must be finite".into()));
        }
        Ok(Self { arch, dropout, weights, checkpoint })
    }

    /// Freezes the current weights as the checkpoint.
    pub fn with_checkpoint_from_weights(mut self) -> Self {
        self.checkpoint = self.weights.clone();
        self
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }
}

/// Restores the checkpoint weights.
pub fn reset_to_checkpoint(model: &ModelState) -> ModelState {
    ModelState { weights: model.checkpoint.clone(), ..model.clone() }
}

/// Writes the window input vector of pixel `(px, py)` into `out`.
pub(crate) fn window_input(image: &ImageSample, window: usize, px: usize, py: usize, out: &mut [f64]) {
    let half = (window / 2) as i64;
    let d = image.feature_dim;
    let mut k = 0;
    for dy in -half..=half {
        let y = (py as i64 + dy).clamp(0, image.height as i64 - 1) as usize;
        for dx in -half..=half {
            let x = (px as i64 + dx).clamp(0, image.width as i64 - 1) as usize;
            out[k..k + d].copy_from_slice(image.feature(x, y));
            k += d;
        }
    }
}

/// Hidden activations `tanh(W1 x + b1)`.
pub(crate) fn hidden_activations(arch: &Architecture, w: &Weights, input: &[f64], out: &mut [f64]) {
    let n_in = arch.input_dim();
    for (j, h) in out.iter_mut().enumerate() {
        let row = &w.w1[j * n_in..(j + 1) * n_in];
        let a: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + w.b1[j];
        *h = a.tanh();
    }
}

/// Softmax of `W2 (mask ⊙ h) + b2` written into `out`. `mask` holds the
/// already-scaled keep factors (`0` or `1/(1-p)`); `None` means no dropout.
pub(crate) fn output_probs(arch: &Architecture, w: &Weights, hidden: &[f64], mask: Option<&[f64]>, out: &mut [f64]) {
    let nh = arch.hidden;
    for (c, o) in out.iter_mut().enumerate() {
        let row = &w.w2[c * nh..(c + 1) * nh];
        let mut z = w.b2[c];
        match mask {
            Some(m) => {
                for j in 0..nh {
                    z += row[j] * hidden[j] * m[j];
                }
            }
            None => {
                for j in 0..nh {
                    z += row[j] * hidden[j];
                }
            }
        }
        *o = z;
    }
    softmax_in_place(out);
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Draws an inverted-dropout mask; every unit kept when `p == 0`.
pub(crate) fn sample_mask<R: Rng>(rng: &mut R, p: f64, mask: &mut [f64]) {
    if p == 0.0 {
        mask.fill(1.0);
        return;
    }
    let keep = 1.0 / (1.0 - p);
    for m in mask.iter_mut() {
        *m = if rng.random::<f64>() >= p { keep } else { 0.0 };
    }
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Posterior predictive and uncertainty of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveOutput {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    /// `pixels × classes`, mean softmax over the MC passes.
    pub probs: Vec<f64>,
    /// Mutual information per pixel, divided by `ln C`.
    pub mi: Vec<f64>,
    /// `pixels × classes` population variance of the softmax over the passes.
    pub mc_variance: Vec<f64>,
}

impl PredictiveOutput {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn probs_at(&self, pixel: usize) -> &[f64] {
        &self.probs[pixel * self.num_classes..(pixel + 1) * self.num_classes]
    }

    pub fn argmax(&self, pixel: usize) -> usize {
        argmax(self.probs_at(pixel))
    }

    /// Image-level acquisition score: mean per-pixel MI.
    pub fn mean_mi(&self) -> f64 {
        self.mi.iter().sum::<f64>() / self.mi.len().max(1) as f64
    }

    /// Builds the output from explicit per-pixel softmax samples
    /// (`samples[t][pixel * C + c]`).
    pub fn from_samples(width: usize, height: usize, num_classes: usize, samples: &[Vec<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("need at least one MC sample".into()));
        }
        let n = width * height;
        if samples.iter().any(|s| s.len() != n * num_classes) {
            return Err(Error::InvalidArgument("sample length does not match image size".into()));
        }
        let t = samples.len() as f64;
        let ln_c = (num_classes as f64).ln();
        let mut probs = vec![0.0; n * num_classes];
        let mut var = vec![0.0; n * num_classes];
        let mut mi = vec![0.0; n];
        for p in 0..n {
            let range = p * num_classes..(p + 1) * num_classes;
            let identical = samples.iter().all(|s| s[range.clone()] == samples[0][range.clone()]);
            if identical {
                probs[range.clone()].copy_from_slice(&samples[0][range]);
                continue;
            }
            let mut mean_entropy = 0.0;
            for s in samples {
                let sp = &s[range.clone()];
                for c in 0..num_classes {
                    probs[range.start + c] += sp[c];
                }
                mean_entropy += entropy(sp);
            }
            mean_entropy /= t;
            for c in 0..num_classes {
                probs[range.start + c] /= t;
            }
            for s in samples {
                for c in 0..num_classes {
                    let d = s[range.start + c] - probs[range.start + c];
                    var[range.start + c] += d * d;
                }
            }
            for c in 0..num_classes {
                var[range.start + c] /= t;
            }
            let raw = entropy(&probs[range]) - mean_entropy;
            mi[p] = (raw / ln_c).clamp(0.0, 1.0);
        }
        Ok(Self { width, height, num_classes, probs, mi, mc_variance: var })
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_image(model: &ModelState, image: &ImageSample) -> Result<()> {
    if image.feature_dim != model.arch.feature_dim {
        return Err(Error::InvalidArgument(format!(
            "image has {} features per pixel, model expects {}",
            image.feature_dim, model.arch.feature_dim
        )));
    }
    if image.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("image features must be finite".into()));
    }
    Ok(())
}

fn pass_seed(seed: u64, pass: usize) -> u64 {
    seed::derive(seed, PASS_STREAM, pass as u64)
}

/// One stochastic forward pass (`pass` selects the dropout stream). Returns
/// `pixels × classes` softmax outputs.
pub fn forward_pass(model: &ModelState, image: &ImageSample, rng_seed: u64, pass: usize) -> Result<Vec<f64>> {
    check_image(model, image)?;
    let arch = &model.arch;
    let mut rng = seed::rng(pass_seed(rng_seed, pass));
    let mut input = vec![0.0; arch.input_dim()];
    let mut hidden = vec![0.0; arch.hidden];
    let mut mask = vec![1.0; arch.hidden];
    let mut out = vec![0.0; image.pixels() * arch.num_classes];
    for py in 0..image.height {
        for px in 0..image.width {
            let p = py * image.width + px;
            window_input(image, arch.window, px, py, &mut input);
            hidden_activations(arch, &model.weights, &input, &mut hidden);
            sample_mask(&mut rng, model.dropout, &mut mask);
            output_probs(arch, &model.weights, &hidden, Some(&mask), &mut out[p * arch.num_classes..(p + 1) * arch.num_classes]);
        }
    }
    Ok(out)
}

/// MC-dropout prediction with `t_samples` passes: mean softmax, normalised
/// mutual information and per-class variance.
pub fn predict_mc(model: &ModelState, image: &ImageSample, t_samples: usize, rng_seed: u64) -> Result<PredictiveOutput> {
    if t_samples == 0 {
        return Err(Error::InvalidArgument("MC sample count must be >= 1".into()));
    }
    check_image(model, image)?;
    let arch = &model.arch;
    let c = arch.num_classes;
    let mut rngs: Vec<_> = (0..t_samples).map(|t| seed::rng(pass_seed(rng_seed, t))).collect();
    let mut input = vec![0.0; arch.input_dim()];
    let mut hidden = vec![0.0; arch.hidden];
    let mut mask = vec![1.0; arch.hidden];
    let n = image.pixels();
    let mut samples = vec![vec![0.0; n * c]; t_samples];
    for py in 0..image.height {
        for px in 0..image.width {
            let p = py * image.width + px;
            window_input(image, arch.window, px, py, &mut input);
            hidden_activations(arch, &model.weights, &input, &mut hidden);
            for (t, rng) in rngs.iter_mut().enumerate() {
                sample_mask(rng, model.dropout, &mut mask);
                output_probs(arch, &model.weights, &hidden, Some(&mask), &mut samples[t][p * c..(p + 1) * c]);
            }
        }
    }
    PredictiveOutput::from_samples(image.width, image.height, c, &samples)
}

/// Dropout-free forward pass (weights scaled by the inverted-dropout rule).
pub fn predict_deterministic(model: &ModelState, image: &ImageSample) -> Result<Vec<f64>> {
    check_image(model, image)?;
    let arch = &model.arch;
    let mut input = vec![0.0; arch.input_dim()];
    let mut hidden = vec![0.0; arch.hidden];
    let mut out = vec![0.0; image.pixels() * arch.num_classes];
    for py in 0..image.height {
        for px in 0..image.width {
            let p = py * image.width + px;
            window_input(image, arch.window, px, py, &mut input);
            hidden_activations(arch, &model.weights, &input, &mut hidden);
            output_probs(arch, &model.weights, &hidden, None, &mut out[p * arch.num_classes..(p + 1) * arch.num_classes]);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::terrain::{CellRect, Pose};

    pub fn image_from_features(width: usize, height: usize, dim: usize, features: Vec<f64>, labels: Vec<u16>) -> ImageSample {
        ImageSample {
            pose: Pose::new(0.0, 0.0, 30.0),
            width,
            height,
            feature_dim: dim,
            features,
            gt_labels: labels,
            footprint: CellRect::new(0, 0, width, height),
        }
    }
}
