use std::collections::HashSet;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::apuf::{parity_features, Crp, FEATURES};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlOptions {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            hidden: vec![64; 4],
            epochs: 30,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    /// Units per layer, input and output included.
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlAttackResult {
    pub model: ModelDescriptor,
    pub train_crps: usize,
    pub test_crps: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Fraction of 1-responses in the test set.
    pub target_uniformity: f64,
    pub final_loss: f64,
}

impl MlAttackResult {
    /// Accuracy of always guessing the majority test response.
    pub fn majority_baseline(&self) -> f64 {
        self.target_uniformity.max(1.0 - self.target_uniformity)
    }
}

struct Layer {
    w: Array2<f32>,
    b: Array1<f32>,
    vw: Array2<f32>,
    vb: Array1<f32>,
}

/// Feed-forward ReLU network with a single logistic output.
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|p| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let he = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive");
                Layer {
                    w: Array2::from_shape_fn((fan_in, fan_out), |_| he.sample(rng) as f32),
                    b: Array1::zeros(fan_out),
                    vw: Array2::zeros((fan_in, fan_out)),
                    vb: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    /// Pre-activations of every layer.
    fn forward(&self, x: ArrayView2<f32>) -> Vec<Array2<f32>> {
        let mut zs: Vec<Array2<f32>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = match zs.last() {
                None => x.dot(&l.w) + &l.b,
                Some(prev) => prev.mapv(relu).dot(&l.w) + &l.b,
            };
            zs.push(z);
        }
        zs
    }

    /// Output logits.
    pub fn logits(&self, x: ArrayView2<f32>) -> Array1<f32> {
        self.forward(x).pop().expect("non-empty").column(0).to_owned()
    }

    /// One SGD-with-momentum step on a batch; returns the mean cross-entropy.
    fn train_batch(&mut self, x: ArrayView2<f32>, y: &[f32], lr: f32, momentum: f32) -> f64 {
        let zs = self.forward(x);
        let b = y.len() as f32;
        let out = zs.last().expect("non-empty").column(0);
        let mut loss = 0.0f64;
        let mut delta = Array2::<f32>::zeros((y.len(), 1));
        for (i, (&z, &t)) in out.iter().zip(y).enumerate() {
            // Stable log(1 + e^-|z|) form of the logistic loss.
            loss += (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()) as f64;
            delta[[i, 0]] = (sigmoid(z) - t) / b;
        }
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 {
                x.to_owned()
            } else {
                zs[l - 1].mapv(relu)
            };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let next_delta = if l > 0 {
                let mut d = delta.dot(&self.layers[l].w.t());
                d.zip_mut_with(&zs[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                Some(d)
            } else {
                None
            };
            let layer = &mut self.layers[l];
            layer.vw.zip_mut_with(&gw, |v, &g| *v = momentum * *v - lr * g);
            layer.vb.zip_mut_with(&gb, |v, &g| *v = momentum * *v - lr * g);
            layer.w += &layer.vw;
            layer.b += &layer.vb;
            if let Some(d) = next_delta {
                delta = d;
            }
        }
        loss / y.len() as f64
    }

    pub fn accuracy(&self, x: ArrayView2<f32>, y: &[f32]) -> f64 {
        let mut correct = 0usize;
        for start in (0..y.len()).step_by(4096) {
            let end = (start + 4096).min(y.len());
            let z = self.logits(x.slice(s![start..end, ..]));
            correct += z
                .iter()
                .zip(&y[start..end])
                .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
                .count();
        }
        correct as f64 / y.len() as f64
    }
}

#[inline]
fn relu(z: f32) -> f32 {
    z.max(0.0)
}

#[inline]
fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

/// Parity-feature matrix and 0/1 labels.
pub fn feature_matrix(crps: &[Crp]) -> (Array2<f32>, Vec<f32>) {
    let mut x = Array2::<f32>::zeros((crps.len(), FEATURES));
    for (mut row, c) in x.outer_iter_mut().zip(crps) {
        for (d, f) in row.iter_mut().zip(parity_features(c.challenge)) {
            *d = f as f32;
        }
    }
    let y = crps.iter().map(|c| c.response as u8 as f32).collect();
    (x, y)
}

/// Splits off the last `n_test` CRPs as the held-out set.
pub fn split_crps(crps: &[Crp], n_test: usize) -> Result<(&[Crp], &[Crp])> {
    if n_test == 0 || n_test >= crps.len() {
        return Err(invalid("n_test", "must leave both sets non-empty"));
    }
    Ok(crps.split_at(crps.len() - n_test))
}

/// Trains an MLP on parity features of the external challenges and reports
/// held-out accuracy.
pub fn train_ml_attack(train: &[Crp], test: &[Crp], options: &MlOptions) -> Result<MlAttackResult> {
    if train.is_empty() || test.is_empty() {
        return Err(invalid("crps", "train and test sets must be non-empty"));
    }
    if options.batch_size == 0 || options.epochs == 0 {
        return Err(invalid("options", "batch size and epochs must be positive"));
    }
    let seen: HashSet<u64> = train.iter().map(|c| c.challenge.bits()).collect();
    if test.iter().any(|c| seen.contains(&c.challenge.bits())) {
        return Err(invalid("crps", "test challenges overlap the training set"));
    }

    let mut sizes = vec![FEATURES];
    sizes.extend(&options.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut net = Mlp::new(&sizes, &mut rng);

    let (x, y) = feature_matrix(train);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut xb = Array2::<f32>::zeros((options.batch_size, FEATURES));
    let mut yb = vec![0f32; options.batch_size];
    let mut final_loss = f64::NAN;
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        // Step decay over the last third of training.
        let lr = if epoch >= 2 * options.epochs / 3 {
            options.learning_rate * 0.1
        } else {
            options.learning_rate
        } as f32;
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(options.batch_size) {
            let m = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&x.row(i));
                yb[r] = y[i];
            }
            let loss = net.train_batch(xb.slice(s![..m, ..]), &yb[..m], lr, options.momentum as f32);
            if !loss.is_finite() {
                return Err(Error::DivergedTraining(epoch));
            }
            total += loss;
            batches += 1;
        }
        final_loss = total / batches as f64;
    }

    let (xt, yt) = feature_matrix(test);
    let ones = yt.iter().filter(|&&v| v > 0.5).count() as f64;
    Ok(MlAttackResult {
        model: ModelDescriptor {
            layer_sizes: sizes,
            epochs: options.epochs,
            learning_rate: options.learning_rate,
            momentum: options.momentum,
            batch_size: options.batch_size,
        },
        train_crps: train.len(),
        test_crps: test.len(),
        train_accuracy: net.accuracy(x.view(), &y),
        test_accuracy: net.accuracy(xt.view(), &yt),
        target_uniformity: ones / yt.len() as f64,
        final_loss,
    })
}
