//! A small fully connected classifier with dropout.
//!
//! Hidden layers use ReLU followed by inverted dropout (keep with
//! probability `1 - p`, scale kept units by `1 / (1 - p)`); the output layer
//! is a softmax. Keeping dropout on at inference and repeating the forward
//! pass gives the stochastic passes consumed by [`crate::mcdropout`].
//!
//! Parameters are stored as `f32`; arithmetic runs in `f64` and output
//! probabilities are rounded to `f32` precision so they survive a trip
//! through the `UQTK` container unchanged.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::io::{load_weights, save_weights, write_atomic};
use crate::data::{softmax_into, Labels, Matrix, PassTensor, ProbMatrix, WeightVector};
use crate::error::{Result, UqError};
use crate::rng::{self, purpose, SplitMix64};

/// Number of stochastic passes used when none is given.
pub const DEFAULT_PASSES: usize = 50;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    weights: Vec<f32>,
    biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniNet {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    dropout_rate: f64,
    seed: u64,
}

/// Checkpoint sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

/// Per-epoch mean training loss and accuracy, measured on the mini-batches
/// as they were trained (dropout active).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for (e, (l, a)) in self.loss.iter().zip(&self.accuracy).enumerate() {
            s.push_str(&format!("{},{},{}\n", e + 1, l, a));
        }
        s
    }
}

/// Gradients of the mean cross-entropy, flattened in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub values: Vec<f64>,
}

/// Layer parameters widened to f64 once per batch.
struct Wide {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

/// Per-sample activations kept for backprop.
struct Trace {
    /// Input to each layer (post-dropout activations of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Dropout multiplier per hidden unit (0 or 1/(1-p)).
    masks: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl MiniNet {
    /// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(UqError::InvalidArgument(format!(
                "need >= 2 layers of positive width, got {layer_dims:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(UqError::InvalidArgument(format!(
                "dropout rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let mut rng = rng::substream(seed, purpose::INIT);
        let layers = layer_dims
            .windows(2)
            .map(|d| {
                let (n_in, n_out) = (d[0], d[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32)
                    .collect();
                Layer {
                    n_in,
                    n_out,
                    weights,
                    biases: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            dropout_rate,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_dims.last().expect("at least two layers")
    }

    pub fn config(&self) -> NetConfig {
        NetConfig {
            layer_dims: self.layer_dims.clone(),
            dropout_rate: self.dropout_rate,
            seed: self.seed,
        }
    }

    /// `sum_i d_i * d_{i+1} + d_{i+1}`.
    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.n_in * l.n_out + l.n_out).sum()
    }

    /// All parameters, layer by layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f32]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(UqError::LengthMismatch {
                what: "parameter vector",
                expected: self.n_parameters(),
                found: params.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            l.biases.copy_from_slice(&params[at..at + l.n_out]);
            at += l.n_out;
        }
        Ok(())
    }

    pub fn export_weights(&self) -> WeightVector {
        WeightVector::new(self.parameters(), format!("mininet {:?}", self.layer_dims))
            .expect("parameters stay finite")
    }

    /// Rebuilds a network from its sidecar config and flat parameters.
    pub fn from_parts(config: &NetConfig, weights: &WeightVector) -> Result<Self> {
        let mut net = Self::init(&config.layer_dims, config.dropout_rate, config.seed)?;
        net.set_parameters(weights.values())?;
        Ok(net)
    }

    fn wide(&self) -> Wide {
        Wide {
            w: self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|&v| f64::from(v)).collect())
                .collect(),
            b: self
                .layers
                .iter()
                .map(|l| l.biases.iter().map(|&v| f64::from(v)).collect())
                .collect(),
        }
    }

    fn check_input(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.input_dim() {
            return Err(UqError::LengthMismatch {
                what: "input features",
                expected: self.input_dim(),
                found: data.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass for one sample. `dropout` draws masks when given and the
    /// rate is positive.
    fn trace<R: Rng>(&self, wide: &Wide, x: &[f32], mut dropout: Option<&mut R>) -> Trace {
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut masks = Vec::with_capacity(n_layers - 1);
        let mut a: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut logits = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let z: Vec<f64> = (0..layer.n_out)
                .map(|o| {
                    let row = &wide.w[li][o * layer.n_in..(o + 1) * layer.n_in];
                    row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + wide.b[li][o]
                })
                .collect();
            inputs.push(std::mem::take(&mut a));
            if li + 1 == n_layers {
                logits = z;
                break;
            }
            let mask: Vec<f64> = match dropout.as_deref_mut() {
                Some(rng) if self.dropout_rate > 0.0 => (0..layer.n_out)
                    .map(|_| {
                        if rng.random::<f64>() >= self.dropout_rate {
                            keep_scale
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                _ => vec![1.0; layer.n_out],
            };
            a = z.iter().zip(&mask).map(|(&v, m)| v.max(0.0) * m).collect();
            pre.push(z);
            masks.push(mask);
        }
        let mut probs = Vec::with_capacity(logits.len());
        softmax_into(&logits, &mut probs);
        Trace {
            inputs,
            pre,
            masks,
            probs,
        }
    }

    fn predict_with<R: Rng>(&self, data: &Matrix, mut dropout: Option<&mut R>) -> Result<ProbMatrix> {
        self.check_input(data)?;
        let wide = self.wide();
        let mut values = Vec::with_capacity(data.rows() * self.n_classes());
        for i in 0..data.rows() {
            let t = self.trace(&wide, data.row(i), dropout.as_deref_mut());
            values.extend(t.probs.iter().map(|&p| f64::from(p as f32)));
        }
        ProbMatrix::new(self.n_classes(), values)
    }

    /// Deterministic forward pass (dropout off).
    pub fn predict(&self, data: &Matrix) -> Result<ProbMatrix> {
        self.predict_with::<SplitMix64>(data, None)
    }

    /// Forward pass with dropout masks drawn from `rng`.
    pub fn predict_stochastic<R: Rng>(&self, data: &Matrix, rng: &mut R) -> Result<ProbMatrix> {
        self.predict_with(data, Some(rng))
    }

    /// `passes` dropout-on evaluations of `data`. Pass `t` draws its masks
    /// from sub-stream `t` of the MC stream of `seed`, so passes can run in
    /// parallel and the result does not depend on thread count.
    pub fn mc_forward(&self, data: &Matrix, passes: usize, seed: u64) -> Result<PassTensor> {
        if passes == 0 {
            return Err(UqError::InvalidArgument("need at least one pass".into()));
        }
        self.check_input(data)?;
        let base = rng::derive_seed(seed, purpose::MC_PASSES);
        let slices = (0..passes as u64)
            .into_par_iter()
            .map(|t| self.predict_stochastic(data, &mut rng::substream(base, t)))
            .collect::<Result<Vec<_>>>()?;
        PassTensor::from_passes(&slices)
    }

    /// Mean cross-entropy over `idx` and its gradient w.r.t. every parameter.
    pub fn loss_and_gradients<R: Rng>(
        &self,
        data: &Matrix,
        labels: &Labels,
        idx: &[usize],
        dropout: Option<&mut R>,
    ) -> Result<Gradients> {
        self.check_input(data)?;
        labels.check_aligned(data.rows(), self.n_classes())?;
        let wide = self.wide();
        let (loss, _, grads) = self.batch_gradients(&wide, data, labels.as_slice(), idx, dropout);
        Ok(Gradients { loss, values: grads.into_iter().flatten().collect() })
    }

    /// Returns (mean loss, correct count, per-layer [dW | db] gradients).
    fn batch_gradients<R: Rng>(
        &self,
        wide: &Wide,
        data: &Matrix,
        labels: &[usize],
        idx: &[usize],
        mut dropout: Option<&mut R>,
    ) -> (f64, usize, Vec<Vec<f64>>) {
        let mut grads: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| vec![0.0; l.n_in * l.n_out + l.n_out])
            .collect();
        let mut loss = 0.0;
        let mut correct = 0;
        for &i in idx {
            let y = labels[i];
            let tr = self.trace(wide, data.row(i), dropout.as_deref_mut());
            let p = tr.probs[y];
            loss += if p.is_nan() { f64::NAN } else { -p.max(f64::MIN_POSITIVE).ln() };
            if crate::data::argmax(&tr.probs) == y {
                correct += 1;
            }
            let mut delta = tr.probs.clone();
            delta[y] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &tr.inputs[li];
                let g = &mut grads[li];
                let (gw, gb) = g.split_at_mut(layer.n_in * layer.n_out);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (gwi, &a) in gw[o * layer.n_in..(o + 1) * layer.n_in].iter_mut().zip(input) {
                        *gwi += d * a;
                    }
                    gb[o] += d;
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &wide.w[li][o * layer.n_in..(o + 1) * layer.n_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                let (z, mask) = (&tr.pre[li - 1], &tr.masks[li - 1]);
                for ((p, &zv), &m) in prev.iter_mut().zip(z).zip(mask) {
                    *p *= if zv > 0.0 { m } else { 0.0 };
                }
                delta = prev;
            }
        }
        let scale = 1.0 / idx.len().max(1) as f64;
        for g in &mut grads {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
        (loss * scale, correct, grads)
    }

    /// Mini-batch SGD on cross-entropy with dropout active. Batches are
    /// reshuffled each epoch from the shuffle stream of `cfg.seed`; masks
    /// come from its dropout stream.
    pub fn train(&mut self, data: &Matrix, labels: &Labels, cfg: &TrainConfig) -> Result<TrainHistory> {
        self.check_input(data)?;
        labels.check_aligned(data.rows(), self.n_classes())?;
        if cfg.batch_size == 0 {
            return Err(UqError::InvalidArgument("batch size must be >= 1".into()));
        }
        if cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 {
            return Err(UqError::InvalidArgument(format!(
                "learning rate must be >= 0, got {}",
                cfg.learning_rate
            )));
        }
        let n = data.rows();
        if n == 0 && cfg.epochs > 0 {
            return Err(UqError::Empty("training data"));
        }
        let mut shuffle_rng = rng::substream(cfg.seed, purpose::SHUFFLE);
        let mut mask_rng = rng::substream(cfg.seed, purpose::TRAIN_DROPOUT);
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = TrainHistory::default();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let (mut loss_sum, mut correct) = (0.0, 0usize);
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                let wide = self.wide();
                let (loss, hits, grads) =
                    self.batch_gradients(&wide, data, labels.as_slice(), batch, Some(&mut mask_rng));
                if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                    return Err(UqError::NanLoss { epoch: epoch + 1, batch: b });
                }
                loss_sum += loss * batch.len() as f64;
                correct += hits;
                if cfg.learning_rate > 0.0 && !self.apply(&wide, &grads, cfg.learning_rate) {
                    return Err(UqError::NanLoss { epoch: epoch + 1, batch: b });
                }
            }
            history.loss.push(loss_sum / n as f64);
            history.accuracy.push(correct as f64 / n as f64);
        }
        Ok(history)
    }

    /// SGD step; refuses (leaving the net untouched) if any updated
    /// parameter would overflow `f32`.
    fn apply(&mut self, wide: &Wide, grads: &[Vec<f64>], lr: f64) -> bool {
        let updated: Vec<(Vec<f32>, Vec<f32>)> = self
            .layers
            .iter()
            .enumerate()
            .map(|(li, layer)| {
                let (gw, gb) = grads[li].split_at(layer.n_in * layer.n_out);
                let step = |p: &[f64], g: &[f64]| -> Vec<f32> {
                    p.iter().zip(g).map(|(&v, &g)| (v - lr * g) as f32).collect()
                };
                (step(&wide.w[li], gw), step(&wide.b[li], gb))
            })
            .collect();
        if updated
            .iter()
            .any(|(w, b)| w.iter().chain(b).any(|v| !v.is_finite()))
        {
            return false;
        }
        for (layer, (w, b)) in self.layers.iter_mut().zip(updated) {
            layer.weights = w;
            layer.biases = b;
        }
        true
    }
}

/// Sidecar path for a checkpoint: `model.uqtk` → `model.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

/// Writes the rank-1 weight blob and its JSON sidecar.
pub fn save_checkpoint(net: &MiniNet, path: &Path) -> Result<()> {
    save_weights(path, &net.export_weights())?;
    let json = serde_json::to_string_pretty(&net.config())?;
    write_atomic(&sidecar_path(path), format!("{json}\n").as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<MiniNet> {
    let weights = load_weights(path)?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| UqError::io(&side, e))?;
    let config: NetConfig = serde_json::from_str(&text)?;
    MiniNet::from_parts(&config, &weights)
}
