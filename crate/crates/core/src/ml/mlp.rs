use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, MlError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_units: 8,
            epochs: 200,
            learning_rate: 0.05,
        }
    }
}

/// Single hidden layer perceptron: sigmoid hidden units, softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub params: MlpParams,
    pub n_inputs: usize,
    pub n_classes: usize,
    /// Training means of the raw attributes, used to fill missing values.
    pub impute: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `hidden x inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `classes x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient in the layout of [`MlpModel::params_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient(pub Vec<f64>);

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl MlpModel {
    fn hidden(&self) -> usize {
        self.b1.len()
    }

    /// Imputes and standardizes a raw attribute vector.
    pub fn prepare(&self, values: &[Option<f64>]) -> Vec<f64> {
        (0..self.n_inputs)
            .map(|i| {
                let raw = values.get(i).copied().flatten().unwrap_or(self.impute[i]);
                (raw - self.mean[i]) / self.std[i]
            })
            .collect()
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let n_in = self.n_inputs;
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * n_in..(j + 1) * n_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *h = sigmoid(z);
        }
        let nh = self.hidden();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.w2[c * nh..(c + 1) * nh];
            *o = row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>() + self.b2[c];
        }
        softmax_in_place(out);
    }

    /// Class probabilities for a standardized input.
    pub fn probabilities_prepared(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden()];
        let mut out = vec![0.0; self.n_classes];
        self.forward(x, &mut h, &mut out);
        out
    }

    pub fn probabilities(&self, values: &[Option<f64>]) -> Vec<f64> {
        self.probabilities_prepared(&self.prepare(values))
    }

    pub fn predict_class(&self, values: &[Option<f64>]) -> usize {
        argmax(&self.probabilities(values))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// Weighted cross-entropy over standardized inputs and its gradient.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[usize], weights: &[f64]) -> (f64, MlpGradient) {
        let mut grad = vec![0.0; self.params_flat().len()];
        let mut h = vec![0.0; self.hidden()];
        let mut p = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        for ((x, &y), &w) in xs.iter().zip(ys).zip(weights) {
            self.forward(x, &mut h, &mut p);
            loss -= w * libm::log(p[y].max(f64::MIN_POSITIVE));
            self.backward(x, y, w, &h, &p, &mut grad);
        }
        (loss, MlpGradient(grad))
    }

    fn backward(&self, x: &[f64], y: usize, w: f64, h: &[f64], p: &[f64], grad: &mut [f64]) {
        let n_in = self.n_inputs;
        let nh = self.hidden();
        let (g_w1, rest) = grad.split_at_mut(self.w1.len());
        let (g_b1, rest) = rest.split_at_mut(nh);
        let (g_w2, g_b2) = rest.split_at_mut(self.w2.len());
        let mut dh = vec![0.0; nh];
        for c in 0..self.n_classes {
            let dz = w * (p[c] - if c == y { 1.0 } else { 0.0 });
            g_b2[c] += dz;
            for j in 0..nh {
                g_w2[c * nh + j] += dz * h[j];
                dh[j] += dz * self.w2[c * nh + j];
            }
        }
        for j in 0..nh {
            let dz = dh[j] * h[j] * (1.0 - h[j]);
            g_b1[j] += dz;
            for i in 0..n_in {
                g_w1[j * n_in + i] += dz * x[i];
            }
        }
    }
}

/// Trains with per-instance SGD; inputs are mean-imputed then standardized
/// using training statistics.
pub fn train_mlp(data: &Dataset, params: MlpParams, seed: u64) -> Result<MlpModel, MlError> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    if params.hidden_units == 0 {
        return Err(MlError::BadParams("hidden_units must be at least 1"));
    }
    if !(params.learning_rate > 0.0) {
        return Err(MlError::BadParams("learning_rate must be positive"));
    }
    let n_in = data.n_attributes();
    let n_classes = data.n_classes();
    let nh = params.hidden_units;

    let mut impute = vec![0.0; n_in];
    for (i, slot) in impute.iter_mut().enumerate() {
        let (sum, n) = data
            .instances
            .iter()
            .filter_map(|inst| inst.values[i])
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n > 0 {
            *slot = sum / n as f64;
        }
    }
    let raw: Vec<Vec<f64>> = data
        .instances
        .iter()
        .map(|inst| inst.values.iter().zip(&impute).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect();
    let n = raw.len() as f64;
    let mut mean = vec![0.0; n_in];
    let mut std = vec![0.0; n_in];
    for i in 0..n_in {
        mean[i] = raw.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[i] - mean[i]) * (r[i] - mean[i])).sum::<f64>() / n;
        std[i] = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
    }
    let xs: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| r.iter().enumerate().map(|(i, v)| (v - mean[i]) / std[i]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r1 = 1.0 / libm::sqrt(n_in as f64);
    let r2 = 1.0 / libm::sqrt(nh as f64);
    let mut model = MlpModel {
        params,
        n_inputs: n_in,
        n_classes,
        impute,
        mean,
        std,
        w1: (0..nh * n_in).map(|_| rng.gen_range(-r1..r1)).collect(),
        b1: vec![0.0; nh],
        w2: (0..n_classes * nh).map(|_| rng.gen_range(-r2..r2)).collect(),
        b2: vec![0.0; n_classes],
    };

    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut h = vec![0.0; nh];
    let mut p = vec![0.0; n_classes];
    let mut grad = vec![0.0; model.params_flat().len()];
    for _ in 0..params.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &idx in &order {
            let inst = &data.instances[idx];
            grad.iter_mut().for_each(|g| *g = 0.0);
            model.forward(&xs[idx], &mut h, &mut p);
            model.backward(&xs[idx], inst.label, inst.weight, &h, &p, &mut grad);
            step(&mut model, &grad, params.learning_rate);
        }
    }
    Ok(model)
}

fn step(model: &mut MlpModel, grad: &[f64], lr: f64) {
    let mut offset = 0;
    for layer in [&mut model.w1, &mut model.b1, &mut model.w2, &mut model.b2] {
        for (w, g) in layer.iter_mut().zip(&grad[offset..]) {
            *w -= lr * g;
        }
        offset += layer.len();
    }
}
