//! Dense 1D temporal convolution over sequences of frames.
//!
//! A sequence has a time axis and a context axis (the per-step feature
//! vector). A layer combines `w` consecutive input frames through `w`
//! weight matrices of shape `c_out x c_in`, adds a bias and applies an
//! activation. Both the naive evaluation path and the streaming engine
//! call [`conv_frame_into`], so their outputs are bit-identical.

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// One time step: a vector over the context axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame(Vec<f64>);

impl Frame {
    pub fn new(values: Vec<f64>) -> Self {
        Frame(values)
    }

    pub fn zeros(context: usize) -> Self {
        Frame(vec![0.0; context])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for Frame {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Frame {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Frame {
    fn from(v: Vec<f64>) -> Self {
        Frame(v)
    }
}

/// Ordered frames sharing one context size, stored time-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    context: usize,
    data: Vec<f64>,
}

impl Sequence {
    pub fn empty(context: usize) -> Self {
        Sequence {
            context,
            data: Vec::new(),
        }
    }

    pub fn zeros(len: usize, context: usize) -> Self {
        Sequence {
            context,
            data: vec![0.0; len * context],
        }
    }

    pub fn from_flat(context: usize, data: Vec<f64>) -> Result<Self> {
        if context == 0 {
            return invalid("context size must be at least 1");
        }
        if !data.len().is_multiple_of(context) {
            return invalid(format!(
                "flat buffer of {} values is not a multiple of context {}",
                data.len(),
                context
            ));
        }
        Ok(Sequence { context, data })
    }

    pub fn from_frames<I, F>(context: usize, frames: I) -> Result<Self>
    where
        I: IntoIterator<Item = F>,
        F: AsRef<[f64]>,
    {
        if context == 0 {
            return invalid("context size must be at least 1");
        }
        let mut seq = Sequence::empty(context);
        for f in frames {
            seq.push(f.as_ref())?;
        }
        Ok(seq)
    }

    pub fn push(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.context {
            return invalid(format!(
                "frame has {} channels, sequence context is {}",
                frame.len(),
                self.context
            ));
        }
        self.data.extend_from_slice(frame);
        Ok(())
    }

    /// Number of frames (the time axis length).
    pub fn len(&self) -> usize {
        self.data.len() / self.context.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.context..(t + 1) * self.context]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.context..(t + 1) * self.context]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.context)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// The last `k` frames (or all of them if fewer exist).
    pub fn tail(&self, k: usize) -> Sequence {
        let start = self.len().saturating_sub(k);
        Sequence {
            context: self.context,
            data: self.data[start * self.context..].to_vec(),
        }
    }

    /// Frames `start..end` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> Sequence {
        Sequence {
            context: self.context,
            data: self.data[start * self.context..end * self.context].to_vec(),
        }
    }

    pub fn dot(&self, other: &Sequence) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y = apply(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

/// Parameters of one temporal convolution layer.
///
/// Weights are stored tap-major: `weights[(tau * c_out + o) * c_in + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    window: usize,
    c_in: usize,
    c_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl ConvLayerParams {
    pub fn new(
        window: usize,
        c_in: usize,
        c_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if window == 0 || c_in == 0 || c_out == 0 {
            return invalid(format!(
                "layer dimensions must be positive (w={window}, c_in={c_in}, c_out={c_out})"
            ));
        }
        if weights.len() != window * c_out * c_in {
            return invalid(format!(
                "expected {} weights for w={window}, c_out={c_out}, c_in={c_in}; got {}",
                window * c_out * c_in,
                weights.len()
            ));
        }
        if bias.len() != c_out {
            return invalid(format!(
                "bias has {} entries, expected c_out={c_out}",
                bias.len()
            ));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return invalid("layer parameters must be finite");
        }
        Ok(ConvLayerParams {
            window,
            c_in,
            c_out,
            weights,
            bias,
            activation,
        })
    }

    /// Build from one `c_out x c_in` matrix per tap.
    pub fn from_taps(taps: &[Vec<Vec<f64>>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let window = taps.len();
        let c_out = taps.first().map_or(0, |m| m.len());
        let c_in = taps.first().and_then(|m| m.first()).map_or(0, |r| r.len());
        let mut weights = Vec::with_capacity(window * c_out * c_in);
        for (tau, m) in taps.iter().enumerate() {
            if m.len() != c_out || m.iter().any(|row| row.len() != c_in) {
                return invalid(format!("tap {tau} is not a {c_out}x{c_in} matrix"));
            }
            for row in m {
                weights.extend_from_slice(row);
            }
        }
        Self::new(window, c_in, c_out, weights, bias, activation)
    }

    /// Weights drawn uniformly from `[-scale, scale]`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        window: usize,
        c_in: usize,
        c_out: usize,
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weights = (0..window * c_out * c_in)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self::new(window, c_in, c_out, weights, vec![0.0; c_out], activation)
    }

    /// `w = 1`, identity matrix, zero bias, identity activation.
    pub fn identity(context: usize) -> Self {
        let mut weights = vec![0.0; context * context];
        for i in 0..context {
            weights[i * context + i] = 1.0;
        }
        ConvLayerParams {
            window: 1,
            c_in: context,
            c_out: context,
            weights,
            bias: vec![0.0; context],
            activation: Activation::Identity,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// The `c_out x c_in` matrix for tap `tau`, row-major.
    #[inline]
    pub fn tap(&self, tau: usize) -> &[f64] {
        let m = self.c_out * self.c_in;
        &self.weights[tau * m..(tau + 1) * m]
    }

    #[inline]
    pub fn weight(&self, tau: usize, o: usize, i: usize) -> f64 {
        self.weights[(tau * self.c_out + o) * self.c_in + i]
    }

    /// Same dimensions and activation.
    pub fn same_shape(&self, other: &ConvLayerParams) -> bool {
        self.window == other.window
            && self.c_in == other.c_in
            && self.c_out == other.c_out
            && self.activation == other.activation
    }
}

/// Count of convolution operations (one output frame of one layer).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounter {
    per_layer: Vec<u64>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_layers(n: usize) -> Self {
        OpCounter {
            per_layer: vec![0; n],
        }
    }

    #[inline]
    pub fn record(&mut self, layer: usize) {
        self.add(layer, 1);
    }

    pub fn add(&mut self, layer: usize, count: u64) {
        if layer >= self.per_layer.len() {
            self.per_layer.resize(layer + 1, 0);
        }
        self.per_layer[layer] += count;
    }

    pub fn per_layer(&self) -> &[u64] {
        &self.per_layer
    }

    pub fn layer(&self, layer: usize) -> u64 {
        self.per_layer.get(layer).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.per_layer.iter().sum()
    }
}

/// Stacked layers, shallowest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<ConvLayerParams>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<ConvLayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("network needs at least one layer");
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].c_out != pair[1].c_in {
                return invalid(format!(
                    "layer {k} has c_out={} but layer {} has c_in={}",
                    pair[0].c_out,
                    k + 1,
                    pair[1].c_in
                ));
            }
        }
        Ok(NetworkSpec { layers })
    }

    /// Random network with uniform weights in `[-scale, scale]` and random biases.
    pub fn random<R: Rng + ?Sized>(
        context: usize,
        channels: &[usize],
        windows: &[usize],
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if channels.len() != windows.len() {
            return invalid("channels and windows must have one entry per layer");
        }
        let mut c_in = context;
        let mut layers = Vec::with_capacity(windows.len());
        for (&c_out, &w) in channels.iter().zip(windows) {
            let mut layer = ConvLayerParams::random(w, c_in, c_out, activation, scale, rng)?;
            for b in layer.bias_mut() {
                *b = rng.random_range(-scale..=scale);
            }
            layers.push(layer);
            c_in = c_out;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[ConvLayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayerParams] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn c_in(&self) -> usize {
        self.layers[0].c_in
    }

    pub fn c_out(&self) -> usize {
        self.layers[self.layers.len() - 1].c_out
    }

    /// Time-axis length of every layer output for an input of `t_in` frames,
    /// or `None` if some layer would underflow.
    pub fn output_lengths(&self, t_in: usize) -> Option<Vec<usize>> {
        let mut t = t_in;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if t < layer.window {
                return None;
            }
            t = t - layer.window + 1;
            out.push(t);
        }
        Some(out)
    }

    /// Shortest input that yields one frame in the deepest layer.
    pub fn min_input_len(&self) -> usize {
        1 + self.layers.iter().map(|l| l.window - 1).sum::<usize>()
    }

    pub fn shape_compatible(&self, other: &NetworkSpec) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }
}

/// The single-frame kernel: `out = act(sum_tau W_tau . window(tau) + bias)`.
///
/// Accumulation order is fixed: tau ascending, then output rows, then the
/// row's dot product in index order. Every evaluation path goes through here.
#[inline]
pub fn conv_frame_into<'a, F>(layer: &ConvLayerParams, mut window: F, out: &mut [f64])
where
    F: FnMut(usize) -> &'a [f64],
{
    debug_assert_eq!(out.len(), layer.c_out);
    out.fill(0.0);
    let c_in = layer.c_in;
    for tau in 0..layer.window {
        let x = window(tau);
        debug_assert_eq!(x.len(), c_in);
        let tap = layer.tap(tau);
        for (acc, row) in out.iter_mut().zip(tap.chunks_exact(c_in)) {
            let mut s = *acc;
            for (wij, xj) in row.iter().zip(x) {
                s += wij * xj;
            }
            *acc = s;
        }
    }
    let act = layer.activation;
    for (acc, b) in out.iter_mut().zip(&layer.bias) {
        *acc = act.apply(*acc + b);
    }
}

/// Compute one output frame from exactly `w` input frames.
pub fn conv_frame<F: AsRef<[f64]>>(
    layer: &ConvLayerParams,
    window: &[F],
    counter: &mut OpCounter,
    layer_index: usize,
) -> Result<Frame> {
    if window.len() != layer.window {
        return invalid(format!(
            "window holds {} frames, layer expects {}",
            window.len(),
            layer.window
        ));
    }
    if let Some(bad) = window.iter().position(|f| f.as_ref().len() != layer.c_in) {
        return invalid(format!(
            "window frame {bad} has {} channels, layer expects c_in={}",
            window[bad].as_ref().len(),
            layer.c_in
        ));
    }
    let mut out = vec![0.0; layer.c_out];
    conv_frame_into(layer, |tau| window[tau].as_ref(), &mut out);
    counter.record(layer_index);
    Ok(Frame(out))
}

fn check_input(layer: &ConvLayerParams, input: &Sequence) -> Result<()> {
    if input.context() != layer.c_in {
        return invalid(format!(
            "input context {} does not match layer c_in={}",
            input.context(),
            layer.c_in
        ));
    }
    if input.len() < layer.window {
        return Err(Error::WindowUnderflow {
            needed: layer.window,
            got: input.len(),
        });
    }
    Ok(())
}

fn valid_conv_counted(
    layer: &ConvLayerParams,
    input: &Sequence,
    counter: &mut OpCounter,
    layer_index: usize,
) -> Result<Sequence> {
    check_input(layer, input)?;
    let t_out = input.len() - layer.window + 1;
    let mut out = Sequence::zeros(t_out, layer.c_out);
    for t in 0..t_out {
        conv_frame_into(layer, |tau| input.frame(t + tau), out.frame_mut(t));
    }
    counter.add(layer_index, t_out as u64);
    Ok(out)
}

/// Valid convolution: `t_out = t_in - w + 1`.
pub fn valid_conv(layer: &ConvLayerParams, input: &Sequence) -> Result<Sequence> {
    valid_conv_counted(layer, input, &mut OpCounter::new(), 0)
}

/// Full (transposed) convolution with the layer's weights.
///
/// Frame `s` of the output is `act(sum_{tau} W_tau^T . hidden[s - tau] + recon_bias)`
/// over the taps where `0 <= s - tau < t_h`, so `t_out = t_h + w - 1`. With
/// identity activation and zero bias this is the exact adjoint of
/// [`valid_conv`]'s linear part.
pub fn full_conv_adjoint(
    layer: &ConvLayerParams,
    hidden: &Sequence,
    recon_bias: &[f64],
) -> Result<Sequence> {
    if hidden.context() != layer.c_out {
        return invalid(format!(
            "hidden context {} does not match layer c_out={}",
            hidden.context(),
            layer.c_out
        ));
    }
    if recon_bias.len() != layer.c_in {
        return invalid(format!(
            "reconstruction bias has {} entries, expected c_in={}",
            recon_bias.len(),
            layer.c_in
        ));
    }
    let t_h = hidden.len();
    if t_h == 0 {
        return Ok(Sequence::empty(layer.c_in));
    }
    let t_out = t_h + layer.window - 1;
    let mut out = Sequence::zeros(t_out, layer.c_in);
    for s in 0..t_out {
        adjoint_frame_into(
            layer,
            |tau| (s >= tau && s - tau < t_h).then(|| hidden.frame(s - tau)),
            recon_bias,
            out.frame_mut(s),
        );
    }
    Ok(out)
}

/// One frame of the full convolution; `taps(tau)` yields `hidden[s - tau]`
/// when that frame exists.
#[inline]
pub fn adjoint_frame_into<'a, F>(
    layer: &ConvLayerParams,
    mut taps: F,
    recon_bias: &[f64],
    out: &mut [f64],
) where
    F: FnMut(usize) -> Option<&'a [f64]>,
{
    debug_assert_eq!(out.len(), layer.c_in);
    out.fill(0.0);
    let c_in = layer.c_in;
    for tau in 0..layer.window {
        let Some(h) = taps(tau) else { continue };
        let tap = layer.tap(tau);
        for (row, &ho) in tap.chunks_exact(c_in).zip(h) {
            for (acc, wij) in out.iter_mut().zip(row) {
                *acc += wij * ho;
            }
        }
    }
    let act = layer.activation;
    for (acc, c) in out.iter_mut().zip(recon_bias) {
        *acc = act.apply(*acc + c);
    }
}

/// Naive forward pass over the whole input; returns every layer's output.
pub fn forward_stack(
    net: &NetworkSpec,
    input: &Sequence,
    counter: &mut OpCounter,
) -> Result<Vec<Sequence>> {
    let mut outputs: Vec<Sequence> = Vec::with_capacity(net.depth());
    for (l, layer) in net.layers.iter().enumerate() {
        let src = if l == 0 { input } else { &outputs[l - 1] };
        let next = valid_conv_counted(layer, src, counter, l)?;
        outputs.push(next);
    }
    Ok(outputs)
}

/// Like [`forward_stack`] but stops at the first layer that would underflow
/// instead of failing; returns the layers that could be computed.
pub fn forward_prefix(net: &NetworkSpec, input: &Sequence, counter: &mut OpCounter) -> Result<Vec<Sequence>> {
    let mut outputs: Vec<Sequence> = Vec::with_capacity(net.depth());
    for (l, layer) in net.layers.iter().enumerate() {
        let src = if l == 0 { input } else { &outputs[l - 1] };
        match valid_conv_counted(layer, src, counter, l) {
            Ok(next) => outputs.push(next),
            Err(Error::WindowUnderflow { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Scalar reference written independently of the kernel: loop order
    // output channel, tap, input channel.
    fn scalar_conv(layer: &ConvLayerParams, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let w = layer.window();
        let t_out = x.len() + 1 - w;
        let mut y = vec![vec![0.0; layer.c_out()]; t_out];
        for t in 0..t_out {
            for o in 0..layer.c_out() {
                let mut s = 0.0;
                for tau in 0..w {
                    for i in 0..layer.c_in() {
                        s += layer.weight(tau, o, i) * x[t + tau][i];
                    }
                }
                y[t][o] = layer.activation().apply(s + layer.bias()[o]);
            }
        }
        y
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Sequence {
        Sequence::from_flat(c, (0..t * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn to_rows(s: &Sequence) -> Vec<Vec<f64>> {
        s.frames().map(|f| f.to_vec()).collect()
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let layer = ConvLayerParams::new(2, 2, 3, vec![0.0; 12], vec![0.5, -1.0, 2.0], Activation::Tanh).unwrap();
        let window = [vec![3.0, 4.0], vec![-7.0, 1.0]];
        let mut c = OpCounter::new();
        let f = conv_frame(&layer, &window, &mut c, 0).unwrap();
        assert_eq!(&*f, &[0.5f64.tanh(), (-1.0f64).tanh(), 2.0f64.tanh()]);
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn identity_layer_passes_frame_through() {
        let layer = ConvLayerParams::identity(3);
        let mut c = OpCounter::new();
        let f = conv_frame(&layer, &[vec![1.5, -2.0, 0.25]], &mut c, 0).unwrap();
        assert_eq!(&*f, &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn conv_frame_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = ConvLayerParams::random(2, 2, 3, Activation::Tanh, 1.0, &mut rng).unwrap();
        layer.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = random_seq(&mut rng, 2, 2);
        let mut c = OpCounter::new();
        let f = conv_frame(&layer, &to_rows(&x), &mut c, 0).unwrap();
        assert_eq!(f.to_vec(), scalar_conv(&layer, &to_rows(&x))[0]);
    }

    #[test]
    fn conv_frame_rejects_bad_window() {
        let layer = ConvLayerParams::identity(2);
        let mut c = OpCounter::new();
        assert!(matches!(
            conv_frame(&layer, &[vec![1.0]], &mut c, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(conv_frame(&layer, &[vec![1.0, 2.0], vec![1.0, 2.0]], &mut c, 0).is_err());
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn valid_conv_shape_and_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvLayerParams::random(3, 2, 2, Activation::Tanh, 0.5, &mut rng).unwrap();
        let x = random_seq(&mut rng, 6, 2);
        assert_eq!(valid_conv(&layer, &x).unwrap().len(), 4);
        let short = random_seq(&mut rng, 2, 2);
        assert!(matches!(
            valid_conv(&layer, &short),
            Err(Error::WindowUnderflow { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn valid_conv_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_seq(&mut rng, 5, 3);
        assert_eq!(valid_conv(&ConvLayerParams::identity(3), &x).unwrap(), x);
    }

    #[test]
    fn valid_conv_matches_scalar_oracle_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for w in 1..=4 {
            for c_in in 1..=4 {
                for c_out in 1..=4 {
                    for t in w..=8 {
                        for act in [Activation::Tanh, Activation::Identity] {
                            let mut layer = ConvLayerParams::random(w, c_in, c_out, act, 1.0, &mut rng).unwrap();
                            for b in layer.bias_mut() {
                                *b = rng.random_range(-1.0..1.0);
                            }
                            let x = random_seq(&mut rng, t, c_in);
                            let got = valid_conv(&layer, &x).unwrap();
                            assert_eq!(to_rows(&got), scalar_conv(&layer, &to_rows(&x)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_conv_shape_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = ConvLayerParams::random(3, 2, 4, Activation::Identity, 0.5, &mut rng).unwrap();
        let h = random_seq(&mut rng, 4, 4);
        assert_eq!(full_conv_adjoint(&layer, &h, &[0.0; 2]).unwrap().len(), 6);

        let id = ConvLayerParams::identity(3);
        let h = random_seq(&mut rng, 5, 3);
        assert_eq!(full_conv_adjoint(&id, &h, &[0.0; 3]).unwrap(), h);
    }

    #[test]
    fn full_conv_rejects_shape_mismatch() {
        let id = ConvLayerParams::identity(3);
        let h = Sequence::zeros(2, 2);
        assert!(full_conv_adjoint(&id, &h, &[0.0; 3]).is_err());
        assert!(full_conv_adjoint(&id, &Sequence::zeros(2, 3), &[0.0; 2]).is_err());
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w = rng.random_range(1..=5);
            let c_in = rng.random_range(1..=4);
            let c_out = rng.random_range(1..=4);
            let t = rng.random_range(w..w + 8);
            let layer = ConvLayerParams::random(w, c_in, c_out, Activation::Identity, 1.0, &mut rng).unwrap();
            let x = random_seq(&mut rng, t, c_in);
            let h = random_seq(&mut rng, t - w + 1, c_out);
            let lhs = valid_conv(&layer, &x).unwrap().dot(&h);
            let rhs = x.dot(&full_conv_adjoint(&layer, &h, &vec![0.0; c_in]).unwrap());
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() / scale <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn forward_stack_counts_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_seq(&mut rng, 10, 2);

        let one = NetworkSpec::random(2, &[3], &[3], Activation::Tanh, 0.5, &mut rng).unwrap();
        let mut c = OpCounter::new();
        forward_stack(&one, &x, &mut c).unwrap();
        assert_eq!(c.total(), 8);

        let two = NetworkSpec::random(2, &[3, 2], &[3, 3], Activation::Tanh, 0.5, &mut rng).unwrap();
        let mut c = OpCounter::new();
        let outs = forward_stack(&two, &x, &mut c).unwrap();
        assert_eq!(c.per_layer(), &[8, 6]);
        assert_eq!(c.total(), 14);
        assert_eq!(outs[1].len(), 6);
    }

    #[test]
    fn identity_stack_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_seq(&mut rng, 4, 3);
        let net = NetworkSpec::new(vec![ConvLayerParams::identity(3); 3]).unwrap();
        let outs = forward_stack(&net, &x, &mut OpCounter::new()).unwrap();
        assert_eq!(outs.last().unwrap(), &x);
    }

    #[test]
    fn network_rejects_broken_chain() {
        let a = ConvLayerParams::identity(3);
        let b = ConvLayerParams::identity(2);
        assert!(NetworkSpec::new(vec![a, b]).is_err());
        assert!(NetworkSpec::new(vec![]).is_err());
    }

    #[test]
    fn layer_rejects_non_finite() {
        assert!(ConvLayerParams::new(1, 1, 1, vec![f64::NAN], vec![0.0], Activation::Tanh).is_err());
        assert!(ConvLayerParams::new(1, 1, 1, vec![1.0], vec![f64::INFINITY], Activation::Tanh).is_err());
    }

    #[test]
    fn forward_prefix_stops_at_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = NetworkSpec::random(2, &[2, 2], &[3, 4], Activation::Tanh, 0.5, &mut rng).unwrap();
        let x = random_seq(&mut rng, 4, 2);
        let outs = forward_prefix(&net, &x, &mut OpCounter::new()).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(net.output_lengths(4), None);
        assert_eq!(net.output_lengths(6), Some(vec![4, 1]));
        assert_eq!(net.min_input_len(), 6);
    }
}
