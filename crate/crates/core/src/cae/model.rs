use rand::Rng;

use crate::conv::{full_conv_adjoint, valid_conv, Activation, ConvLayerParams, Sequence};
use crate::error::{invalid, Error, Result};

/// Which gradient path training follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Backpropagate through every hidden frame.
    Regular,
    /// Backpropagate into the encoder only through the newest hidden frame;
    /// older frames are treated as cached constants.
    ShiftNet,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Regular => "regular",
            TrainMode::ShiftNet => "shiftnet",
        }
    }
}

/// Single-layer convolutional auto-encoder with tied weights.
///
/// Encoding is a valid convolution; decoding applies the transpose of the
/// same weights (a full convolution), its own bias and the encoder's
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    encoder: ConvLayerParams,
    decoder_bias: Vec<f64>,
}

impl CaeModel {
    pub fn new(encoder: ConvLayerParams, decoder_bias: Vec<f64>) -> Result<Self> {
        if decoder_bias.len() != encoder.c_in() {
            return invalid(format!(
                "decoder bias has {} entries, expected c_in={}",
                decoder_bias.len(),
                encoder.c_in()
            ));
        }
        Ok(CaeModel { encoder, decoder_bias })
    }

    /// Weights uniform on `[-0.1, 0.1]`, zero biases.
    pub fn random<R: Rng + ?Sized>(
        context: usize,
        hidden: usize,
        window: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = ConvLayerParams::random(window, context, hidden, activation, 0.1, rng)?;
        Self::new(encoder, vec![0.0; context])
    }

    pub fn encoder(&self) -> &ConvLayerParams {
        &self.encoder
    }

    pub fn decoder_bias(&self) -> &[f64] {
        &self.decoder_bias
    }

    pub fn encode(&self, x: &Sequence) -> Result<Sequence> {
        valid_conv(&self.encoder, x)
    }

    pub fn decode(&self, h: &Sequence) -> Result<Sequence> {
        full_conv_adjoint(&self.encoder, h, &self.decoder_bias)
    }

    pub fn reconstruct(&self, x: &Sequence) -> Result<Sequence> {
        self.decode(&self.encode(x)?)
    }

    pub fn num_params(&self) -> usize {
        self.encoder.weights().len() + self.encoder.bias().len() + self.decoder_bias.len()
    }

    /// Parameters flattened as `[weights, encoder bias, decoder bias]`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.encoder.weights());
        v.extend_from_slice(self.encoder.bias());
        v.extend_from_slice(&self.decoder_bias);
        v
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            ));
        }
        let nw = self.encoder.weights().len();
        let nb = self.encoder.bias().len();
        self.encoder.weights_mut().copy_from_slice(&params[..nw]);
        self.encoder.bias_mut().copy_from_slice(&params[nw..nw + nb]);
        self.decoder_bias.copy_from_slice(&params[nw + nb..]);
        Ok(())
    }

    fn apply_step(&mut self, grads: &CaeGradients, learning_rate: f64) {
        for (p, g) in self.encoder.weights_mut().iter_mut().zip(&grads.weights) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.encoder.bias_mut().iter_mut().zip(&grads.encoder_bias) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.decoder_bias.iter_mut().zip(&grads.decoder_bias) {
            *p -= learning_rate * g;
        }
    }
}

/// `sum |x - decode(encode(x))|^2` over all frames and channels.
pub fn reconstruction_error(model: &CaeModel, x: &Sequence) -> Result<f64> {
    let xr = model.reconstruct(x)?;
    Ok(x.as_flat().iter().zip(xr.as_flat()).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn dataset_error(model: &CaeModel, batch: &[Sequence]) -> Result<f64> {
    batch.iter().map(|x| reconstruction_error(model, x)).sum()
}

/// Gradient of the summed reconstruction error, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeGradients {
    pub weights: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

impl CaeGradients {
    fn zeros(model: &CaeModel) -> Self {
        CaeGradients {
            weights: vec![0.0; model.encoder.weights().len()],
            encoder_bias: vec![0.0; model.encoder.bias().len()],
            decoder_bias: vec![0.0; model.decoder_bias.len()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.encoder_bias);
        v.extend_from_slice(&self.decoder_bias);
        v
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.encoder_bias)
            .chain(&self.decoder_bias)
            .all(|g| g.is_finite())
    }
}

/// dE/d(params) summed over `batch`.
pub fn gradients(model: &CaeModel, batch: &[Sequence], mode: TrainMode) -> Result<CaeGradients> {
    if batch.is_empty() {
        return invalid("gradient batch is empty");
    }
    let mut g = CaeGradients::zeros(model);
    for x in batch {
        accumulate_sample(model, x, mode, &mut g)?;
    }
    Ok(g)
}

fn accumulate_sample(model: &CaeModel, x: &Sequence, mode: TrainMode, g: &mut CaeGradients) -> Result<()> {
    let enc = &model.encoder;
    let (w, c_in, c_out) = (enc.window(), enc.c_in(), enc.c_out());
    let act = enc.activation();

    let h = model.encode(x)?;
    let xr = model.decode(&h)?;
    let t_h = h.len();
    let t_x = x.len();

    // gradient at the decoder pre-activation
    let mut dz = Sequence::zeros(t_x, c_in);
    for s in 0..t_x {
        let (xs, rs) = (x.frame(s), xr.frame(s));
        for (i, d) in dz.frame_mut(s).iter_mut().enumerate() {
            *d = 2.0 * (rs[i] - xs[i]) * act.derivative_from_output(rs[i]);
        }
    }
    for s in 0..t_x {
        for (gc, d) in g.decoder_bias.iter_mut().zip(dz.frame(s)) {
            *gc += d;
        }
    }

    // decoder side of the tied weights: z[s] = sum_tau W_tau^T h[s - tau]
    for t in 0..t_h {
        let ht = h.frame(t);
        for tau in 0..w {
            let dzs = dz.frame(t + tau);
            let base = tau * c_out * c_in;
            for (o, &ho) in ht.iter().enumerate() {
                let row = &mut g.weights[base + o * c_in..base + (o + 1) * c_in];
                for (gw, d) in row.iter_mut().zip(dzs) {
                    *gw += d * ho;
                }
            }
        }
    }

    // encoder side: only the newest hidden frame carries gradient under ShiftNet
    let first = match mode {
        TrainMode::Regular => 0,
        TrainMode::ShiftNet => t_h - 1,
    };
    let mut da = vec![0.0; c_out];
    for t in first..t_h {
        let ht = h.frame(t);
        for (o, d) in da.iter_mut().enumerate() {
            let mut s = 0.0;
            for tau in 0..w {
                let row = &enc.tap(tau)[o * c_in..(o + 1) * c_in];
                s += row.iter().zip(dz.frame(t + tau)).map(|(a, b)| a * b).sum::<f64>();
            }
            *d = s * act.derivative_from_output(ht[o]);
        }
        for (gb, d) in g.encoder_bias.iter_mut().zip(&da) {
            *gb += d;
        }
        for tau in 0..w {
            let xs = x.frame(t + tau);
            let base = tau * c_out * c_in;
            for (o, &d) in da.iter().enumerate() {
                let row = &mut g.weights[base + o * c_in..base + (o + 1) * c_in];
                for (gw, xi) in row.iter_mut().zip(xs) {
                    *gw += d * xi;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-4,
            seed: 0,
            mode: TrainMode::Regular,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be finite and non-negative");
        }
        Ok(())
    }
}

/// Loss before training and after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Full-batch gradient descent on the summed reconstruction error.
pub fn train(model: &CaeModel, data: &[Sequence], config: &TrainConfig) -> Result<(CaeModel, TrainReport)> {
    config.validate()?;
    let mut model = model.clone();
    let initial_loss = dataset_error(&model, data)?;
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let grads = gradients(&model, data, config.mode)?;
        if !grads.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: f64::NAN });
        }
        model.apply_step(&grads, config.learning_rate);
        let loss = dataset_error(&model, data)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        losses.push(loss);
    }
    Ok((model, TrainReport { initial_loss, losses }))
}

/// Hidden activations of each sample, frames concatenated.
pub fn encode_features(model: &CaeModel, data: &[Sequence]) -> Result<Vec<Vec<f64>>> {
    data.iter().map(|x| Ok(model.encode(x)?.into_flat())).collect()
}
