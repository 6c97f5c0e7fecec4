//! Segmentation metrics: pixel accuracy, mean IoU and expected calibration error.

use serde::{Deserialize, Serialize};

use super::{argmax, predict_mc, ModelState};
use crate::error::{Error, Result};
use crate::seed;
use crate::terrain::ImageSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub miou: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    /// `counts[truth * C + pred]`
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.num_classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.num_classes).map(|c| self.counts[c * self.num_classes + c]).sum();
        correct as f64 / self.total().max(1) as f64
    }

    /// Per-class IoU; `None` for classes absent from both truth and prediction.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let c = self.num_classes;
        (0..c)
            .map(|k| {
                let tp = self.counts[k * c + k];
                let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| self.counts[k * c + p]).sum();
                let fp: u64 = (0..c).filter(|&t| t != k).map(|t| self.counts[t * c + k]).sum();
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn mean_iou(&self) -> f64 {
        let present: Vec<f64> = self.iou().into_iter().flatten().collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Accumulates `(confidence, correct)` pairs into equal-width bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    count: Vec<u64>,
    conf_sum: Vec<f64>,
    correct: Vec<u64>,
}

impl CalibrationBins {
    pub fn new(bins: usize) -> Self {
        Self { count: vec![0; bins], conf_sum: vec![0.0; bins], correct: vec![0; bins] }
    }

    pub fn add(&mut self, confidence: f64, correct: bool) {
        let b = self.count.len();
        let idx = ((confidence * b as f64).floor() as usize).min(b - 1);
        self.count[idx] += 1;
        self.conf_sum[idx] += confidence;
        self.correct[idx] += correct as u64;
    }

    /// `Σ_b (n_b / n) |acc_b − conf_b|`
    pub fn ece(&self) -> f64 {
        let n: u64 = self.count.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let mut ece = 0.0;
        for b in 0..self.count.len() {
            if self.count[b] == 0 {
                continue;
            }
            let nb = self.count[b] as f64;
            ece += (nb / n as f64) * (self.correct[b] as f64 / nb - self.conf_sum[b] / nb).abs();
        }
        ece
    }
}

pub fn mean_iou(truth: &[u16], pred: &[u16], num_classes: usize) -> f64 {
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t as usize, p as usize);
    }
    cm.mean_iou()
}

pub fn expected_calibration_error(confidences: &[f64], correct: &[bool], bins: usize) -> f64 {
    let mut cb = CalibrationBins::new(bins.max(1));
    for (&c, &ok) in confidences.iter().zip(correct) {
        cb.add(c, ok);
    }
    cb.ece()
}

/// Scores MC-dropout predictions over labelled test images.
pub fn evaluate(
    model: &ModelState,
    test_images: &[ImageSample],
    t_samples: usize,
    num_ece_bins: usize,
    rng_seed: u64,
) -> Result<Metrics> {
    if test_images.is_empty() {
        return Err(Error::EmptyDataset("test set"));
    }
    if num_ece_bins < 2 {
        return Err(Error::InvalidArgument("need at least 2 ECE bins".into()));
    }
    let c = model.num_classes();
    let mut cm = ConfusionMatrix::new(c);
    let mut bins = CalibrationBins::new(num_ece_bins);
    for (i, img) in test_images.iter().enumerate() {
        let out = predict_mc(model, img, t_samples, seed::derive(rng_seed, 0, i as u64))?;
        for p in 0..out.pixels() {
            let probs = out.probs_at(p);
            let pred = argmax(probs);
            let truth = img.gt_labels[p] as usize;
            cm.add(truth, pred);
            bins.add(probs[pred], pred == truth);
        }
    }
    Ok(Metrics { accuracy: cm.accuracy(), miou: cm.mean_iou(), ece: bins.ece() })
}
