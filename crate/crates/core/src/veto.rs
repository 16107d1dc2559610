//! Artifact veto: a small dense autoencoder over per-channel summary statistics.
//!
//! Windows are summarized per channel as (variance, peak-to-peak, line length),
//! z-scored with calibration statistics, and reconstructed through one tanh
//! bottleneck. A reconstruction error above the calibrated 95th percentile
//! rejects the frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::population_variance;
use crate::signal_io::EpochWindow;

pub const MIN_TRAINING_VECTORS: usize = 10;
pub const THRESHOLD_PERCENTILE: usize = 95;

#[derive(Debug, Error)]
pub enum VetoError {
    #[error("need at least {needed} feature vectors, got {got}")]
    InsufficientData { got: usize, needed: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Raw per-channel `[variance, peak-to-peak, line length]`, channels in order.
pub fn raw_window_features(window: &EpochWindow) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * window.n_channels());
    for row in &window.data {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let ptp = if row.is_empty() { 0.0 } else { hi - lo };
        let line_length: f64 = row.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        out.extend([population_variance(row), ptp, line_length]);
    }
    out
}

/// Calibration mean and standard deviation per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit(raw: &[Vec<f64>]) -> Result<Self, VetoError> {
        let first = raw.first().ok_or(VetoError::EmptyInput)?;
        let d = first.len();
        if raw.iter().any(|r| r.len() != d) {
            return Err(VetoError::Shape("feature vectors differ in length".into()));
        }
        let n = raw.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = raw.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                // constant features pass through centred but unscaled
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

pub fn featurize_window(window: &EpochWindow, normalizer: &FeatureNormalizer) -> Vec<f64> {
    normalizer.apply(&raw_window_features(window))
}

/// One-hidden-layer autoencoder, tanh encoder and linear decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    /// `d_in` rows of `d_hidden` weights.
    pub w_enc: Vec<Vec<f64>>,
    pub b_enc: Vec<f64>,
    /// `d_hidden` rows of `d_in` weights.
    pub w_dec: Vec<Vec<f64>>,
    pub b_dec: Vec<f64>,
}

/// Gradients with the same layout as [`Autoencoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_enc: Vec<Vec<f64>>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<Vec<f64>>,
    pub b_dec: Vec<f64>,
}

pub fn default_hidden_size(d_in: usize) -> usize {
    (d_in / 4).max(2)
}

impl Autoencoder {
    /// Uniform(-0.1, 0.1) weights from `seed`, zero biases.
    pub fn init(d_in: usize, d_hidden: usize, seed: u64) -> Result<Self, VetoError> {
        if d_hidden == 0 || d_hidden >= d_in {
            return Err(VetoError::Shape(format!(
                "hidden size {d_hidden} must be in [1, {d_in})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(-0.1..0.1)).collect())
                .collect()
        };
        let w_enc = draw(d_in, d_hidden);
        let w_dec = draw(d_hidden, d_in);
        Ok(Self {
            w_enc,
            b_enc: vec![0.0; d_hidden],
            w_dec,
            b_dec: vec![0.0; d_in],
        })
    }

    pub fn d_in(&self) -> usize {
        self.b_dec.len()
    }

    pub fn d_hidden(&self) -> usize {
        self.b_enc.len()
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.b_enc.clone();
        for (xi, row) in x.iter().zip(&self.w_enc) {
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += xi * w;
            }
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        h
    }

    pub fn decode(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.b_dec.clone();
        for (hj, row) in h.iter().zip(&self.w_dec) {
            for (yk, w) in y.iter_mut().zip(row) {
                *yk += hj * w;
            }
        }
        y
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(x))
    }

    /// Mean squared error over the vector's components.
    pub fn reconstruction_error(&self, x: &[f64]) -> f64 {
        let y = self.reconstruct(x);
        x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
    }

    /// Batch loss: mean of per-vector reconstruction errors.
    pub fn loss(&self, data: &[Vec<f64>]) -> f64 {
        data.iter().map(|x| self.reconstruction_error(x)).sum::<f64>() / data.len() as f64
    }

    /// Loss and its exact gradient by backpropagation.
    pub fn loss_and_gradient(&self, data: &[Vec<f64>]) -> (f64, Gradients) {
        let (d_in, d_hidden) = (self.d_in(), self.d_hidden());
        let mut g = Gradients {
            w_enc: vec![vec![0.0; d_hidden]; d_in],
            b_enc: vec![0.0; d_hidden],
            w_dec: vec![vec![0.0; d_in]; d_hidden],
            b_dec: vec![0.0; d_in],
        };
        let scale = 2.0 / (data.len() * d_in) as f64;
        let mut loss = 0.0;
        let mut dh = vec![0.0; d_hidden];

        for x in data {
            let h = self.encode(x);
            let y = self.decode(&h);
            let dy: Vec<f64> = y
                .iter()
                .zip(x)
                .map(|(yk, xk)| {
                    loss += (yk - xk) * (yk - xk);
                    scale * (yk - xk)
                })
                .collect();

            for (j, hj) in h.iter().enumerate() {
                let mut acc = 0.0;
                for (k, dyk) in dy.iter().enumerate() {
                    g.w_dec[j][k] += hj * dyk;
                    acc += self.w_dec[j][k] * dyk;
                }
                dh[j] = acc * (1.0 - hj * hj);
            }
            for (k, dyk) in dy.iter().enumerate() {
                g.b_dec[k] += dyk;
            }
            for (i, xi) in x.iter().enumerate() {
                for (j, dhj) in dh.iter().enumerate() {
                    g.w_enc[i][j] += xi * dhj;
                }
            }
            for (j, dhj) in dh.iter().enumerate() {
                g.b_enc[j] += dhj;
            }
        }
        (loss / (data.len() * d_in) as f64, g)
    }

    fn step(&mut self, g: &Gradients, lr: f64) {
        fn apply(params: &mut [f64], grads: &[f64], lr: f64) {
            params.iter_mut().zip(grads).for_each(|(p, d)| *p -= lr * d);
        }
        for (p, d) in self.w_enc.iter_mut().zip(&g.w_enc) {
            apply(p, d, lr);
        }
        for (p, d) in self.w_dec.iter_mut().zip(&g.w_dec) {
            apply(p, d, lr);
        }
        apply(&mut self.b_enc, &g.b_enc, lr);
        apply(&mut self.b_dec, &g.b_dec, lr);
    }

    pub fn is_finite(&self) -> bool {
        self.w_enc.iter().chain(&self.w_dec).flatten().chain(&self.b_enc).chain(&self.b_dec).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    /// `None` picks `max(2, d_in / 4)`.
    pub d_hidden: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            d_hidden: None,
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent; returns the model and the loss before each epoch
/// followed by the final loss.
pub fn train_with_history(
    features: &[Vec<f64>],
    d_hidden: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<(Autoencoder, Vec<f64>), VetoError> {
    if features.len() < MIN_TRAINING_VECTORS {
        return Err(VetoError::InsufficientData {
            got: features.len(),
            needed: MIN_TRAINING_VECTORS,
        });
    }
    let d_in = features[0].len();
    if features.iter().any(|f| f.len() != d_in) {
        return Err(VetoError::Shape("feature vectors differ in length".into()));
    }
    let mut ae = Autoencoder::init(d_in, d_hidden, seed)?;
    let mut history = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (loss, grad) = ae.loss_and_gradient(features);
        history.push(loss);
        ae.step(&grad, learning_rate);
    }
    history.push(ae.loss(features));
    Ok((ae, history))
}

pub fn train(
    features: &[Vec<f64>],
    d_hidden: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Autoencoder, VetoError> {
    train_with_history(features, d_hidden, epochs, learning_rate, seed).map(|(ae, _)| ae)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VetoResult {
    pub reconstruction_error: f64,
    pub threshold: f64,
    pub rejected: bool,
}

impl VetoResult {
    /// A pass-through result for frames that never reached the autoencoder.
    pub fn pass(threshold: f64) -> Self {
        Self {
            reconstruction_error: 0.0,
            threshold,
            rejected: false,
        }
    }
}

pub fn veto(ae: &Autoencoder, features: &[f64], threshold: f64) -> VetoResult {
    let reconstruction_error = ae.reconstruction_error(features);
    VetoResult {
        reconstruction_error,
        threshold,
        rejected: reconstruction_error > threshold,
    }
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th smallest value.
pub fn nearest_rank(values: &[f64], pct: usize) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

pub fn calibrate_threshold(ae: &Autoencoder, features: &[Vec<f64>]) -> Result<f64, VetoError> {
    let errors: Vec<f64> = features.iter().map(|f| ae.reconstruction_error(f)).collect();
    nearest_rank(&errors, THRESHOLD_PERCENTILE).ok_or(VetoError::EmptyInput)
}
