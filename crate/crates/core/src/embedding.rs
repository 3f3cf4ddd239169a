//! Autoencoder embedding of standardized feature vectors into a latent space
//! of higher dimension than the input.
//!
//! Architecture is `D -> H -> L -> H -> D` with tanh on the three inner
//! layers and a linear output. Training is full-batch Adam on the mean
//! squared reconstruction error, so results depend only on `(X, config, seed)`.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Latent width; `2 * D` when unset.
    pub latent_dim: Option<usize>,
    /// Hidden width; `max(8, 2 * D)` when unset.
    pub hidden_dim: Option<usize>,
    pub epochs: usize,
    pub step: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            hidden_dim: None,
            epochs: 200,
            step: 1e-3,
        }
    }
}

impl AutoencoderConfig {
    pub fn dims(&self, input_dim: usize) -> (usize, usize) {
        let hidden = self.hidden_dim.unwrap_or((2 * input_dim).max(8));
        let latent = self.latent_dim.unwrap_or(2 * input_dim);
        (hidden, latent)
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
    /// Encoder (2 layers) followed by decoder (2 layers).
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Loss at the start of each epoch, before that epoch's update.
    pub epoch_errors: Vec<f64>,
    pub epochs: usize,
    pub final_error: f64,
}

/// Per-layer activations for one row: `acts[0]` is the input.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl AutoencoderModel {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::contract("autoencoder dimensions must be positive"));
        }
        if latent_dim <= input_dim {
            return Err(Error::contract(format!(
                "latent dimension {latent_dim} must exceed input dimension {input_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [(input_dim, hidden_dim), (hidden_dim, latent_dim), (latent_dim, hidden_dim), (hidden_dim, input_dim)];
        let layers = shape.iter().map(|&(i, o)| DenseLayer::glorot(i, o, &mut rng)).collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            latent_dim,
            seed,
            layers,
        })
    }

    /// Same shape with every parameter zero.
    pub fn zeroed(input_dim: usize, hidden_dim: usize, latent_dim: usize) -> Self {
        let shape = [(input_dim, hidden_dim), (hidden_dim, latent_dim), (latent_dim, hidden_dim), (hidden_dim, input_dim)];
        Self {
            input_dim,
            hidden_dim,
            latent_dim,
            seed: 0,
            layers: shape.iter().map(|&(i, o)| DenseLayer::zeros(i, o)).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&acts[k], &mut z);
            if k != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Trace { acts }
    }

    fn check_rows(&self, x: &[Vec<f64>]) -> Result<()> {
        for (i, row) in x.iter().enumerate() {
            if row.len() != self.input_dim {
                return Err(Error::contract(format!(
                    "row {i} has {} columns, model expects {}",
                    row.len(),
                    self.input_dim
                )));
            }
        }
        Ok(())
    }

    /// Mean squared reconstruction error over all `N * D` entries.
    pub fn loss(&self, x: &[Vec<f64>]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / (x.len() * self.input_dim) as f64;
        x.iter()
            .map(|row| {
                let t = self.forward(row);
                t.acts.last().unwrap().iter().zip(row).map(|(o, v)| (o - v).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            * scale
    }

    /// Loss and its gradient, flattened in [`params`](Self::params) order.
    pub fn loss_and_grad(&self, x: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let mut grads: Vec<DenseLayer> = self.layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect();
        let mut loss = 0.0;
        if !x.is_empty() {
            let scale = 1.0 / (x.len() * self.input_dim) as f64;
            let last = self.layers.len() - 1;
            for row in x {
                let t = self.forward(row);
                let out = t.acts.last().unwrap();
                let mut delta: Vec<f64> = out.iter().zip(row).map(|(o, v)| 2.0 * scale * (o - v)).collect();
                loss += out.iter().zip(row).map(|(o, v)| (o - v).powi(2)).sum::<f64>() * scale;
                for k in (0..=last).rev() {
                    let layer = &self.layers[k];
                    if k != last {
                        // d tanh(z) = 1 - tanh(z)^2, and acts[k+1] holds tanh(z)
                        for (d, a) in delta.iter_mut().zip(&t.acts[k + 1]) {
                            *d *= 1.0 - a * a;
                        }
                    }
                    let input = &t.acts[k];
                    let g = &mut grads[k];
                    for (o, &d) in delta.iter().enumerate() {
                        g.biases[o] += d;
                        let wrow = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (w, &a) in wrow.iter_mut().zip(input) {
                            *w += d * a;
                        }
                    }
                    if k > 0 {
                        let mut back = vec![0.0; layer.inputs];
                        for (o, &d) in delta.iter().enumerate() {
                            let wrow = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                            for (b, &w) in back.iter_mut().zip(wrow) {
                                *b += d * w;
                            }
                        }
                        delta = back;
                    }
                }
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend_from_slice(&g.weights);
            flat.extend_from_slice(&g.biases);
        }
        (loss, flat)
    }
}

fn check_finite(x: &[Vec<f64>]) -> Result<()> {
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::contract("input contains non-finite values"));
    }
    Ok(())
}

pub fn train_autoencoder(
    x: &[Vec<f64>],
    config: &AutoencoderConfig,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingLog)> {
    let d = x.first().map(Vec::len).ok_or_else(|| Error::contract("training needs at least one row"))?;
    if d == 0 {
        return Err(Error::contract("training needs at least one column"));
    }
    check_finite(x)?;
    let (hidden, latent) = config.dims(d);
    let mut model = AutoencoderModel::init(d, hidden, latent, seed)?;
    model.check_rows(x)?;

    let mut params = model.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut errors = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grad) = model.loss_and_grad(x);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        errors.push(loss);
        let t = (epoch + 1) as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for i in 0..params.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            params[i] -= config.step * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
        }
        model.set_params(&params);
    }
    let final_error = model.loss(x);
    if !final_error.is_finite() {
        return Err(Error::Divergence { epoch: config.epochs });
    }
    let log = TrainingLog {
        epoch_errors: errors,
        epochs: config.epochs,
        final_error,
    };
    Ok((model, log))
}

/// Encoder half of the network: `tanh(W2 tanh(W1 x + b1) + b2)` per row.
pub fn encode(model: &AutoencoderModel, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    model.check_rows(x)?;
    let mut hidden = Vec::new();
    Ok(x
        .iter()
        .map(|row| {
            model.layers[0].apply(row, &mut hidden);
            hidden.iter_mut().for_each(|v| *v = v.tanh());
            let mut z = Vec::new();
            model.layers[1].apply(&hidden, &mut z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            z
        })
        .collect())
}

/// Largest relative disagreement between the analytic gradient and a
/// central difference with step `h`, over every parameter.
pub fn gradient_check(model: &AutoencoderModel, x: &[Vec<f64>], h: f64) -> f64 {
    let (_, analytic) = model.loss_and_grad(x);
    let base = model.params();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut theta = base.clone();
    for (i, &a) in analytic.iter().enumerate() {
        theta[i] = base[i] + h;
        probe.set_params(&theta);
        let up = probe.loss(x);
        theta[i] = base[i] - h;
        probe.set_params(&theta);
        let down = probe.loss(x);
        theta[i] = base[i];
        let n = (up - down) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    worst
}
