//! One-hidden-layer perceptron with logistic units, softmax output and cross-entropy loss.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, Feature, Label};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_scale: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams { hidden: 16, batch_size: 32, learning_rate: 0.05, epochs: 200, init_scale: 0.5 }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("mlp hidden, batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("mlp learning_rate must be positive and finite".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("mlp init_scale must be non-negative and finite".into()));
        }
        Ok(())
    }
}

/// Weights are row-major: `w1[h * 3 + j]`, `w2[c * hidden + h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden: usize,
    pub n_classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Mean training cross-entropy of each epoch, accumulated over its
    /// mini-batches (each sample scored just before its batch update).
    pub loss_trace: Vec<f64>,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpModel {
    pub fn zeros(hidden: usize, n_classes: usize) -> Self {
        MlpModel {
            hidden,
            n_classes,
            w1: vec![0.0; hidden * 3],
            b1: vec![0.0; hidden],
            w2: vec![0.0; n_classes * hidden],
            b2: vec![0.0; n_classes],
            loss_trace: Vec::new(),
        }
    }

    /// Uniform weights in ±`scale`.
    pub fn random<R: Rng>(hidden: usize, n_classes: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(hidden, n_classes);
        for p in m.params_mut() {
            *p = if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 };
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(self.b2.iter_mut())
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
    }

    /// Hidden activations and output logits.
    fn forward(&self, x: &Feature, hidden: &mut [f64], logits: &mut [f64]) {
        for ((a, w), b) in hidden.iter_mut().zip(self.w1.chunks_exact(3)).zip(&self.b1) {
            *a = logistic(w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b);
        }
        for ((z, w), b) in logits.iter_mut().zip(self.w2.chunks_exact(self.hidden)).zip(&self.b2) {
            *z = b + w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn probabilities(&self, x: &Feature) -> Vec<f64> {
        let mut hidden = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.n_classes];
        self.forward(x, &mut hidden, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        z.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: f64 = z.iter().sum();
        z.iter_mut().for_each(|v| *v /= sum);
        z
    }

    /// Argmax of the softmax output; ties go to the smaller label.
    pub fn classify(&self, x: &Feature) -> Label {
        let p = self.probabilities(x);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy over the given samples.
    pub fn loss(&self, x: &[Feature], y: &[Label]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for (p, &l) in x.iter().zip(y) {
            self.forward(p, &mut hidden, &mut z);
            total += log_sum_exp(&z) - z[l];
        }
        total / x.len() as f64
    }

    /// Mean cross-entropy and its gradient, flattened in [`MlpModel::params`] order.
    pub fn loss_and_gradient(&self, x: &[Feature], y: &[Label]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let loss = self.accumulate_gradient(x.iter().zip(y).map(|(p, l)| (p, *l)), &mut grad);
        let n = x.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    /// Adds summed per-sample gradients into `grad`, returns the summed loss.
    fn accumulate_gradient<'a>(&self, batch: impl Iterator<Item = (&'a Feature, Label)>, grad: &mut [f64]) -> f64 {
        let h_n = self.hidden;
        let c_n = self.n_classes;
        let (g_w1, rest) = grad.split_at_mut(h_n * 3);
        let (g_b1, rest) = rest.split_at_mut(h_n);
        let (g_w2, g_b2) = rest.split_at_mut(c_n * h_n);
        let mut hidden = vec![0.0; h_n];
        let mut z = vec![0.0; c_n];
        let mut back = vec![0.0; h_n];
        let mut loss = 0.0;
        for (x, label) in batch {
            self.forward(x, &mut hidden, &mut z);
            let lse = log_sum_exp(&z);
            loss += lse - z[label];
            back.iter_mut().for_each(|b| *b = 0.0);
            for (c, ((w, g), gb)) in self.w2.chunks_exact(h_n).zip(g_w2.chunks_exact_mut(h_n)).zip(g_b2.iter_mut()).enumerate() {
                let delta = (z[c] - lse).exp() - if c == label { 1.0 } else { 0.0 };
                *gb += delta;
                for (((g, w), a), bk) in g.iter_mut().zip(w).zip(&hidden).zip(back.iter_mut()) {
                    *g += delta * a;
                    *bk += delta * w;
                }
            }
            for (((gw, gb), a), bk) in g_w1.chunks_exact_mut(3).zip(g_b1.iter_mut()).zip(&hidden).zip(&back) {
                let d = bk * a * (1.0 - a);
                *gb += d;
                gw[0] += d * x[0];
                gw[1] += d * x[1];
                gw[2] += d * x[2];
            }
        }
        loss
    }

    /// Mini-batch gradient descent; the sample order is reshuffled each epoch.
    pub fn fit(x: &[Feature], y: &[Label], n_classes: usize, params: &MlpParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_training(x, y, n_classes)?;
        let mut model = Self::random(params.hidden, n_classes, params.init_scale, &mut stream(seed, Purpose::Init, 0));
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut grad = vec![0.0; model.param_count()];
        for epoch in 0..params.epochs {
            order.shuffle(&mut stream(seed, Purpose::Model, epoch as u64));
            let mut total = 0.0;
            for batch in order.chunks(params.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                total += model.accumulate_gradient(batch.iter().map(|&i| (&x[i], y[i])), &mut grad);
                let step = params.learning_rate / batch.len() as f64;
                for (p, g) in model.params_mut().zip(&grad) {
                    *p -= step * g;
                }
            }
            let loss = total / x.len() as f64;
            if !loss.is_finite() || model.params_mut().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            model.loss_trace.push(loss);
        }
        Ok(model)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
