use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{hidden_activations, output_probs, sample_mask, window_input, Architecture, ModelState, Weights};
use crate::error::{Error, Result};
use crate::seed;
use crate::terrain::ImageSample;

/// Labelled images. `labels[i]` is the annotation of `images[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSet {
    pub images: Vec<ImageSample>,
    pub labels: Vec<Vec<u16>>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn push(&mut self, image: ImageSample, labels: Vec<u16>) {
        self.images.push(image);
        self.labels.push(labels);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping usually ends sooner.
    pub max_epochs: usize,
    /// Images per mini-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Pixels drawn from each image of a batch per step.
    pub pixels_per_image: usize,
    /// Size of the fixed validation pixel sample.
    pub val_pixels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 400, batch_size: 8, learning_rate: 0.5, patience: 15, pixels_per_image: 128, val_pixels: 2048 }
    }
}

/// `λ = (1 - p) / 2N` for `N` training images.
pub fn weight_decay_for(dropout: f64, num_images: usize) -> f64 {
    (1.0 - dropout) / (2.0 * num_images as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub weight_decay: f64,
}

/// Pixel samples with fixed dropout masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `n × input_dim`
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    /// `n × hidden` scaled keep factors.
    pub masks: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Dropout-masked mean negative log-likelihood plus `λ‖W‖²`, and its exact
/// gradient.
pub fn loss_and_gradient(arch: &Architecture, w: &Weights, batch: &Batch, weight_decay: f64) -> (f64, Weights) {
    let (n_in, nh, nc) = (arch.input_dim(), arch.hidden, arch.num_classes);
    let n = batch.len().max(1) as f64;
    let mut grad = Weights::zeros(arch);
    let mut hidden = vec![0.0; nh];
    let mut masked = vec![0.0; nh];
    let mut probs = vec![0.0; nc];
    let mut d_hidden = vec![0.0; nh];
    let mut nll = 0.0;
    for i in 0..batch.len() {
        let x = &batch.inputs[i * n_in..(i + 1) * n_in];
        let m = &batch.masks[i * nh..(i + 1) * nh];
        let y = batch.labels[i];
        hidden_activations(arch, w, x, &mut hidden);
        for j in 0..nh {
            masked[j] = hidden[j] * m[j];
        }
        output_probs(arch, w, &masked, None, &mut probs);
        nll -= probs[y].max(f64::MIN_POSITIVE).ln();

        d_hidden.fill(0.0);
        for c in 0..nc {
            let dz = (probs[c] - if c == y { 1.0 } else { 0.0 }) / n;
            grad.b2[c] += dz;
            let row = &w.w2[c * nh..(c + 1) * nh];
            let grow = &mut grad.w2[c * nh..(c + 1) * nh];
            for j in 0..nh {
                grow[j] += dz * masked[j];
                d_hidden[j] += dz * row[j];
            }
        }
        for j in 0..nh {
            let da = d_hidden[j] * m[j] * (1.0 - hidden[j] * hidden[j]);
            if da == 0.0 {
                continue;
            }
            grad.b1[j] += da;
            let grow = &mut grad.w1[j * n_in..(j + 1) * n_in];
            for k in 0..n_in {
                grow[k] += da * x[k];
            }
        }
    }
    let loss = nll / n + weight_decay * w.squared_norm();
    for (g, v) in grad.iter_mut().zip(w.iter()) {
        *g += 2.0 * weight_decay * v;
    }
    (loss, grad)
}

fn sample_batch<R: Rng>(
    arch: &Architecture,
    dropout: f64,
    data: &TrainSet,
    image_ids: &[usize],
    pixels_per_image: usize,
    rng: &mut R,
) -> Batch {
    let (n_in, nh) = (arch.input_dim(), arch.hidden);
    let n = image_ids.len() * pixels_per_image;
    let mut batch = Batch { inputs: vec![0.0; n * n_in], labels: Vec::with_capacity(n), masks: vec![0.0; n * nh] };
    let mut k = 0;
    for &i in image_ids {
        let img = &data.images[i];
        for _ in 0..pixels_per_image {
            let p = rng.random_range(0..img.pixels());
            let (px, py) = (p % img.width, p / img.width);
            window_input(img, arch.window, px, py, &mut batch.inputs[k * n_in..(k + 1) * n_in]);
            sample_mask(rng, dropout, &mut batch.masks[k * nh..(k + 1) * nh]);
            batch.labels.push(data.labels[i][p] as usize);
            k += 1;
        }
    }
    batch
}

/// Mean NLL of the dropout-free network on fixed pixels.
fn validation_loss(arch: &Architecture, w: &Weights, inputs: &[f64], labels: &[usize]) -> f64 {
    let n_in = arch.input_dim();
    let mut hidden = vec![0.0; arch.hidden];
    let mut probs = vec![0.0; arch.num_classes];
    let mut nll = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        hidden_activations(arch, w, &inputs[i * n_in..(i + 1) * n_in], &mut hidden);
        output_probs(arch, w, &hidden, None, &mut probs);
        nll -= probs[y].max(f64::MIN_POSITIVE).ln();
    }
    nll / labels.len().max(1) as f64
}

/// Mini-batch gradient descent on the dropout-masked cross entropy with weight
/// decay. Stops once the validation loss has not improved for `patience`
/// epochs and returns the best-validation weights. The input model is left
/// untouched.
pub fn train(
    model: &ModelState,
    data: &TrainSet,
    config: &TrainConfig,
    weight_decay: f64,
    rng_seed: u64,
) -> Result<(ModelState, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if data.images.len() != data.labels.len() {
        return Err(Error::InvalidArgument("images and labels differ in count".into()));
    }
    if !(weight_decay >= 0.0) {
        return Err(Error::InvalidArgument("weight decay must be non-negative".into()));
    }
    if config.batch_size == 0 || config.pixels_per_image == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch size, pixels per image and learning rate must be positive".into()));
    }
    for (img, lab) in data.images.iter().zip(&data.labels) {
        if img.feature_dim != model.arch.feature_dim || lab.len() != img.pixels() {
            return Err(Error::InvalidArgument("training image does not match the model or its labels".into()));
        }
        if lab.iter().any(|&l| l as usize >= model.arch.num_classes) {
            return Err(Error::InvalidArgument("label outside the model's class range".into()));
        }
    }

    let arch = model.arch;
    let mut rng = seed::rng(rng_seed);

    let n_in = arch.input_dim();
    let total_pixels: usize = data.images.iter().map(|i| i.pixels()).sum();
    let n_val = config.val_pixels.min(total_pixels).max(1);
    let mut val_inputs = vec![0.0; n_val * n_in];
    let mut val_labels = Vec::with_capacity(n_val);
    for k in 0..n_val {
        let i = rng.random_range(0..data.len());
        let img = &data.images[i];
        let p = rng.random_range(0..img.pixels());
        window_input(img, arch.window, p % img.width, p / img.width, &mut val_inputs[k * n_in..(k + 1) * n_in]);
        val_labels.push(data.labels[i][p] as usize);
    }

    let mut weights = model.weights.clone();
    let mut best = (validation_loss(&arch, &weights, &val_inputs, &val_labels), weights.clone());
    let mut last_finite = best.0;
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut final_train_loss = f64::NAN;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..config.max_epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch = sample_batch(&arch, model.dropout, data, chunk, config.pixels_per_image, &mut rng);
            let (loss, grad) = loss_and_gradient(&arch, &weights, &batch, weight_decay);
            if !loss.is_finite() {
                return Err(Error::Diverged { last_finite_loss: last_finite });
            }
            last_finite = loss;
            epoch_loss += loss;
            steps += 1;
            for (w, g) in weights.iter_mut().zip(grad.iter()) {
                *w -= config.learning_rate * g;
            }
        }
        final_train_loss = epoch_loss / steps as f64;
        let val = validation_loss(&arch, &weights, &val_inputs, &val_labels);
        if !val.is_finite() || !weights.all_finite() {
            return Err(Error::Diverged { last_finite_loss: last_finite });
        }
        if val < best.0 - 1e-6 {
            best = (val, weights.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let trained = ModelState { weights: best.1, ..model.clone() };
    Ok((trained, TrainReport { epochs_run, best_val_loss: best.0, final_train_loss, weight_decay }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::predict_deterministic;
    use crate::bayes::test_support::image_from_features;

    fn random_batch(arch: &Architecture, n: usize, p: f64, seed: u64) -> Batch {
        let mut rng = seed::rng(seed);
        let mut b = Batch { inputs: vec![], labels: vec![], masks: vec![0.0; n * arch.hidden] };
        for _ in 0..n * arch.input_dim() {
            b.inputs.push(rng.random::<f64>() * 2.0 - 1.0);
        }
        for i in 0..n {
            b.labels.push(rng.random_range(0..arch.num_classes));
            sample_mask(&mut rng, p, &mut b.masks[i * arch.hidden..(i + 1) * arch.hidden]);
        }
        b
    }

    #[test]
    fn weight_decay_formula() {
        assert!((weight_decay_for(0.5, 100) - 0.0025).abs() < 1e-15);
        assert!((weight_decay_for(0.5, 200) - 0.00125).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        // 1 input, 2 hidden, 2 classes: 2 + 2 + 4 + 2 = 10 parameters
        let arch = Architecture { feature_dim: 1, window: 1, hidden: 2, num_classes: 2 };
        assert_eq!(arch.num_params(), 10);
        let w = Weights::init(&arch, 4);
        let batch = random_batch(&arch, 5, 0.3, 8);
        let (_, g) = loss_and_gradient(&arch, &w, &batch, 0.01);
        let h = 1e-6;
        let grads: Vec<f64> = g.iter().copied().collect();
        for k in 0..w.len() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            *plus.iter_mut().nth(k).unwrap() += h;
            *minus.iter_mut().nth(k).unwrap() -= h;
            let fd = (loss_and_gradient(&arch, &plus, &batch, 0.01).0 - loss_and_gradient(&arch, &minus, &batch, 0.01).0) / (2.0 * h);
            let rel = (fd - grads[k]).abs() / fd.abs().max(grads[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: fd {fd} analytic {}", grads[k]);
        }
    }

    #[test]
    fn empty_set_and_negative_decay_rejected() {
        let arch = Architecture { feature_dim: 1, window: 1, hidden: 2, num_classes: 2 };
        let model = ModelState::new(arch, 0.5, 1).unwrap();
        assert!(matches!(train(&model, &TrainSet::default(), &TrainConfig::default(), 0.0, 1), Err(Error::EmptyDataset(_))));
        let mut data = TrainSet::default();
        data.push(image_from_features(1, 1, 1, vec![0.0], vec![0]), vec![0]);
        assert!(train(&model, &data, &TrainConfig::default(), -1.0, 1).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let arch = Architecture { feature_dim: 1, window: 1, hidden: 4, num_classes: 2 };
        let model = ModelState::new(arch, 0.0, 1).unwrap();
        let mut data = TrainSet::default();
        data.push(image_from_features(2, 1, 1, vec![1e3, -1e3], vec![0, 1]), vec![0, 1]);
        let cfg = TrainConfig { learning_rate: 1e300, max_epochs: 50, ..Default::default() };
        assert!(matches!(train(&model, &data, &cfg, 1e300, 1), Err(Error::Diverged { .. })));
    }

    #[test]
    fn single_class_data_is_fitted() {
        let arch = Architecture { feature_dim: 2, window: 3, hidden: 8, num_classes: 3 };
        let model = ModelState::new(arch, 0.5, 2).unwrap();
        let mut rng = seed::rng(5);
        let mut data = TrainSet::default();
        for _ in 0..4 {
            let f: Vec<f64> = (0..6 * 6 * 2).map(|_| rng.random::<f64>()).collect();
            data.push(image_from_features(6, 6, 2, f, vec![1; 36]), vec![1; 36]);
        }
        let cfg = TrainConfig { max_epochs: 300, patience: 30, ..Default::default() };
        let (trained, report) = train(&model, &data, &cfg, 0.0, 3).unwrap();
        assert!(report.best_val_loss < 0.05, "loss {}", report.best_val_loss);
        let probs = predict_deterministic(&trained, &data.images[0]).unwrap();
        for p in 0..36 {
            assert_eq!(crate::bayes::argmax(&probs[p * 3..p * 3 + 3]), 1);
        }
        // input untouched
        assert_eq!(model.weights, model.checkpoint);
    }

    #[test]
    fn training_is_deterministic() {
        let arch = Architecture { feature_dim: 1, window: 1, hidden: 4, num_classes: 2 };
        let model = ModelState::new(arch, 0.5, 2).unwrap();
        let mut data = TrainSet::default();
        data.push(image_from_features(4, 1, 1, vec![0.1, 0.2, 0.8, 0.9], vec![0, 0, 1, 1]), vec![0, 0, 1, 1]);
        let cfg = TrainConfig { max_epochs: 20, ..Default::default() };
        assert_eq!(train(&model, &data, &cfg, 0.01, 9).unwrap().0, train(&model, &data, &cfg, 0.01, 9).unwrap().0);
    }
}
