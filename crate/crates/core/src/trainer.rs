//! Ex-situ training of the binarized ADALINE.
//!
//! Latent real-valued weights are kept in `[-1, 1]` and binarized with
//! `sign` (ties to +1) before every forward pass. The squared hinge loss is
//! taken on the raw class scores `W_b · X_q` of the 8-bit inputs, and its
//! gradient is passed straight through the binarization to an ADAM update.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoder::{fit_normalization, NormalizationStats, QuantizedSample};
use crate::error::{Error, Result};
use crate::rng::{self, SeedStreams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Latent weights start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    /// Append an always-on input (encoded at 255) carrying a bias weight.
    pub bias: bool,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_range: 0.1,
            bias: false,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self, samples: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > samples {
            return Err(Error::param(format!(
                "batch size must be in [1, {samples}], got {}",
                self.batch_size
            )));
        }
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && (0.0..=1.0).contains(&self.init_range);
        if !ok {
            return Err(Error::param("invalid optimizer hyperparameters"));
        }
        Ok(())
    }
}

/// `±1` one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTargets {
    pub targets: Vec<Vec<f64>>,
}

pub fn one_hot_encode(labels: &[usize], classes: usize) -> Result<OneHotTargets> {
    let targets = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l >= classes {
                return Err(Error::param(format!(
                    "label {l} at sample {i} not in [0, {classes})"
                )));
            }
            Ok((0..classes)
                .map(|k| if k == l { 1.0 } else { -1.0 })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(OneHotTargets { targets })
}

/// Elementwise sign with `sign(0) = +1`.
pub fn binarize(latent: &[f64]) -> Vec<i8> {
    latent
        .iter()
        .map(|&w| if w >= 0.0 { 1 } else { -1 })
        .collect()
}

/// Class scores `X · Wᵀ` for a batch of integer inputs.
pub fn forward(inputs: &[QuantizedSample], weights: &[Vec<i8>]) -> Result<Vec<Vec<f64>>> {
    inputs
        .iter()
        .map(|x| {
            weights
                .iter()
                .map(|w| {
                    if w.len() != x.features() {
                        return Err(Error::dim(format!(
                            "input has {} features, weights have {}",
                            x.features(),
                            w.len()
                        )));
                    }
                    Ok(x.values
                        .iter()
                        .zip(w)
                        .map(|(&xv, &wv)| f64::from(xv) * f64::from(wv))
                        .sum())
                })
                .collect()
        })
        .collect()
}

/// Lowest index among the maxima.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Mean squared hinge loss over all `(b, k)` and its gradient wrt the scores.
pub fn squared_hinge_grad(
    scores: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if scores.len() != targets.len() || scores.iter().zip(targets).any(|(s, t)| s.len() != t.len())
    {
        return Err(Error::dim("scores and targets shapes differ"));
    }
    let n: usize = scores.iter().map(Vec::len).sum();
    if n == 0 {
        return Ok((0.0, scores.to_vec()));
    }
    let n = n as f64;
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(targets)
        .map(|(s, t)| {
            s.iter()
                .zip(t)
                .map(|(&sv, &tv)| {
                    let margin = (1.0 - tv * sv).max(0.0);
                    loss += margin * margin;
                    -2.0 * tv * margin / n
                })
                .collect()
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, params: &TrainingParams) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            lr: params.learning_rate,
            beta1: params.beta1,
            beta2: params.beta2,
            epsilon: params.epsilon,
        }
    }
}

/// One bias-corrected ADAM step on the latent weights followed by clamping to
/// `[-1, 1]`. Gradients of weights already saturated at ±1 whose descent
/// direction points further out are zeroed.
pub fn adam_step(latent: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if latent.len() != grads.len() || latent.len() != state.first_moment.len() {
        return Err(Error::dim(
            "latent, gradient and optimizer state lengths differ",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..latent.len() {
        let w = latent[i];
        let g = if w.abs() >= 1.0 && w * grads[i] < 0.0 {
            0.0
        } else {
            grads[i]
        };
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let update = state.lr * (*m / c1) / ((*v / c2).sqrt() + state.epsilon);
        latent[i] = (w - update).clamp(-1.0, 1.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub epochs_run: usize,
    /// Mean per-sample loss over the last epoch.
    pub final_loss: f64,
    /// Accuracy of the binarized model on its own training set.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub latent_weights: Vec<Vec<f64>>,
    pub binary_weights: Vec<Vec<i8>>,
    pub stats: NormalizationStats,
    pub classes: usize,
    #[serde(rename = "hyperparameters")]
    pub params: TrainingParams,
    pub seed: u64,
    pub metrics: TrainingMetrics,
}

impl TrainedModel {
    /// Weights per class including the bias input when enabled.
    pub fn inputs(&self) -> usize {
        self.stats.features() + usize::from(self.params.bias)
    }

    pub fn encode(&self, x: &[f64]) -> Result<QuantizedSample> {
        let q = self.stats.quantize(x)?;
        Ok(if self.params.bias { q.with_bias() } else { q })
    }

    pub fn encode_all(&self, xs: &[Vec<f64>]) -> Result<Vec<QuantizedSample>> {
        xs.iter().map(|x| self.encode(x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let q = self.encode(x)?;
        Ok(argmax(
            &forward(std::slice::from_ref(&q), &self.binary_weights)?[0],
        ))
    }
}

/// Train on raw features `x` with labels in `[0, classes)`. Deterministic for
/// a given `seed`.
pub fn train(
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    params: &TrainingParams,
    seed: u64,
) -> Result<TrainedModel> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "{} samples but {} labels",
            x.len(),
            y.len()
        )));
    }
    if classes == 0 {
        return Err(Error::param("classes must be >= 1"));
    }
    params.validate(x.len())?;
    let streams = SeedStreams::new(seed);

    let stats = fit_normalization(x)?;
    let quantized: Vec<QuantizedSample> = stats
        .quantize_all(x)?
        .into_iter()
        .map(|q| if params.bias { q.with_bias() } else { q })
        .collect();
    let targets = one_hot_encode(y, classes)?.targets;
    let inputs = stats.features() + usize::from(params.bias);

    let mut init = streams.stream(rng::INIT);
    let mut latent: Vec<f64> = (0..classes * inputs)
        .map(|_| {
            if params.init_range == 0.0 {
                0.0
            } else {
                init.random_range(-params.init_range..=params.init_range)
            }
        })
        .collect();
    let mut adam = AdamState::new(latent.len(), params);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut shuffle = streams.stream(rng::SHUFFLE);
    let mut final_loss = 0.0;

    for _ in 0..params.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let weights = split_rows(&binarize(&latent), inputs);
            let bx: Vec<QuantizedSample> = batch.iter().map(|&i| quantized[i].clone()).collect();
            let bt: Vec<Vec<f64>> = batch.iter().map(|&i| targets[i].clone()).collect();
            let scores = forward(&bx, &weights)?;
            let (loss, dscores) = squared_hinge_grad(&scores, &bt)?;
            epoch_loss += loss * batch.len() as f64;

            let mut grads = vec![0.0; latent.len()];
            for (xq, ds) in bx.iter().zip(&dscores) {
                for (k, &d) in ds.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grads[k * inputs..(k + 1) * inputs];
                    for (g, &xv) in row.iter_mut().zip(&xq.values) {
                        *g += d * f64::from(xv);
                    }
                }
            }
            adam_step(&mut latent, &grads, &mut adam)?;
        }
        final_loss = epoch_loss / x.len() as f64;
    }

    let binary_weights = split_rows(&binarize(&latent), inputs);
    let scores = forward(&quantized, &binary_weights)?;
    let correct = scores
        .iter()
        .zip(y)
        .filter(|(s, &t)| argmax(s) == t)
        .count();
    Ok(TrainedModel {
        binary_weights,
        latent_weights: split_rows(&latent, inputs),
        stats,
        classes,
        params: *params,
        seed,
        metrics: TrainingMetrics {
            epochs_run: params.epochs,
            final_loss,
            train_accuracy: correct as f64 / x.len() as f64,
        },
    })
}

fn split_rows<T: Clone>(flat: &[T], width: usize) -> Vec<Vec<T>> {
    flat.chunks(width).map(<[T]>::to_vec).collect()
}

/// Fraction of samples whose argmax class equals the label.
pub fn evaluate(model: &TrainedModel, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("sample/label count mismatch"));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (xi, &yi) in x.iter().zip(y) {
        if model.predict(xi)? == yi {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.len() as f64)
}
