//! One-hidden-layer tanh MLP with a softmax head, trained by mini-batch
//! gradient descent on cross-entropy with early stopping.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 30,
            learning_rate: 0.05,
            batch_size: 16,
            max_epochs: 500,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    inputs: usize,
    hidden: usize,
    classes: usize,
    // per-feature standardisation fitted on the training set
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpClassifier {
    fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let s1 = 1.0 / (inputs as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        MlpClassifier {
            inputs,
            hidden,
            classes,
            mean: vec![0.0; inputs],
            inv_std: vec![1.0; inputs],
            w1: (0..hidden * inputs).map(|_| rng.random_range(-s1..=s1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..classes * hidden).map(|_| rng.random_range(-s2..=s2)).collect(),
            b2: vec![0.0; classes],
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    // returns (standardized input, hidden activations, softmax probabilities)
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let z = self.standardize(x);
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                (self.b1[j] + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect();
        let mut logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in &mut logits {
            *l /= total;
        }
        (z, h, logits)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).2
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba(x);
        let mut best = 0;
        for (k, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = k;
            }
        }
        best
    }

    pub fn error_rate(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let wrong = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) != y).count();
        wrong as f64 / xs.len() as f64
    }

    /// Mean cross-entropy.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| -self.predict_proba(x)[y].max(1e-300).ln())
            .sum();
        total / xs.len().max(1) as f64
    }

    fn backprop(&self, batch: &[usize], xs: &[Vec<f64>], ys: &[usize]) -> Grads {
        let mut g = Grads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.classes],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut dh = vec![0.0; self.hidden];
        for &idx in batch {
            let (z, h, p) = self.forward(&xs[idx]);
            dh.fill(0.0);
            for k in 0..self.classes {
                let d = (p[k] - (k == ys[idx]) as u8 as f64) * scale;
                g.b2[k] += d;
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                let grow = &mut g.w2[k * self.hidden..(k + 1) * self.hidden];
                for j in 0..self.hidden {
                    grow[j] += d * h[j];
                    dh[j] += d * row[j];
                }
            }
            for j in 0..self.hidden {
                let d = dh[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += d;
                let grow = &mut g.w1[j * self.inputs..(j + 1) * self.inputs];
                for (gw, zi) in grow.iter_mut().zip(&z) {
                    *gw += d * zi;
                }
            }
        }
        g
    }

    fn apply(&mut self, g: &Grads, lr: f64) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 4] =
            [(&mut self.w1, &g.w1), (&mut self.b1, &g.b1), (&mut self.w2, &g.w2), (&mut self.b2, &g.b2)];
        for (p, d) in pairs {
            for (a, b) in p.iter_mut().zip(d) {
                *a -= lr * b;
            }
        }
    }

    /// Train on `(xs, ys)`. When `validation` is given, the parameters with
    /// the lowest validation loss are kept and training stops after
    /// `config.patience` epochs without improvement.
    pub fn fit<R: Rng + ?Sized>(
        xs: &[Vec<f64>],
        ys: &[usize],
        classes: usize,
        validation: Option<(&[Vec<f64>], &[usize])>,
        config: &MlpConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return invalid("training set must be non-empty with one label per sample");
        }
        if classes < 2 {
            return invalid("classification needs at least two classes");
        }
        if ys.iter().any(|&y| y >= classes) {
            return invalid("label out of range");
        }
        let inputs = xs[0].len();
        if inputs == 0 || xs.iter().any(|x| x.len() != inputs) {
            return invalid("feature vectors must share a positive length");
        }
        if config.hidden == 0 || config.batch_size == 0 || config.max_epochs == 0 {
            return invalid("MLP hidden size, batch size and epoch limit must be positive");
        }

        let mut model = Self::init(inputs, config.hidden, classes, rng);
        let n = xs.len() as f64;
        for i in 0..inputs {
            let mean = xs.iter().map(|x| x[i]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / n;
            model.mean[i] = mean;
            model.inv_std[i] = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
        }

        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut best: Option<(f64, MlpClassifier)> = None;
        let mut stale = 0;
        for _ in 0..config.max_epochs {
            order.shuffle(rng);
            for batch in order.chunks(config.batch_size) {
                let g = model.backprop(batch, xs, ys);
                model.apply(&g, config.learning_rate);
            }
            if let Some((vx, vy)) = validation.filter(|(vx, _)| !vx.is_empty()) {
                let vloss = model.loss(vx, vy);
                match &best {
                    Some((b, _)) if vloss >= *b => {
                        stale += 1;
                        if stale >= config.patience {
                            break;
                        }
                    }
                    _ => {
                        best = Some((vloss, model.clone()));
                        stale = 0;
                    }
                }
            }
        }
        Ok(best.map_or(model, |(_, m)| m))
    }
}
