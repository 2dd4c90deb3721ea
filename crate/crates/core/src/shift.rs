//! Streaming evaluation with cached activations.
//!
//! Each layer keeps a ring over its input holding exactly `w` frames, and
//! the output of layer `l` is the input ring of layer `l + 1`. A pushed
//! frame therefore triggers at most one kernel call per layer: the newest
//! output frame is computed, and every older activation moves one step
//! back by virtue of the ring's head advancing.
//!
//! Cached activations are only valid for the weights they were computed
//! with. Engines are primed against a [`ParamSource`] version; publishing
//! new weights to the source makes every engine primed on the old version
//! refuse further pushes until it is reloaded.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::conv::{adjoint_frame_into, conv_frame_into, ConvLayerParams, Frame, NetworkSpec, OpCounter, Sequence};
use crate::error::{invalid, Error, Result};
use crate::ring::RingBuffer;

#[derive(Debug)]
struct SourceInner {
    net: RwLock<Arc<NetworkSpec>>,
    version: AtomicU64,
}

/// Versioned, shareable network parameters.
#[derive(Debug, Clone)]
pub struct ParamSource {
    inner: Arc<SourceInner>,
}

impl ParamSource {
    pub fn new(net: NetworkSpec) -> Self {
        ParamSource {
            inner: Arc::new(SourceInner {
                net: RwLock::new(Arc::new(net)),
                version: AtomicU64::new(0),
            }),
        }
    }

    pub fn version(&self) -> u64 {
        self.inner.version.load(Ordering::Acquire)
    }

    pub fn current(&self) -> (Arc<NetworkSpec>, u64) {
        let guard = self.inner.net.read().unwrap_or_else(|e| e.into_inner());
        (Arc::clone(&guard), self.version())
    }

    /// Publish new weights. The shape must match the current network.
    pub fn update(&self, net: NetworkSpec) -> Result<u64> {
        let mut guard = self.inner.net.write().unwrap_or_else(|e| e.into_inner());
        if !guard.shape_compatible(&net) {
            return invalid("new network is not shape-compatible with the cached one");
        }
        *guard = Arc::new(net);
        Ok(self.inner.version.fetch_add(1, Ordering::AcqRel) + 1)
    }
}

/// What one push produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Newly computed frame per layer; `None` while that layer is warming up.
    pub new_frames: Vec<Option<Frame>>,
    /// 1 where a frame was computed, 0 otherwise.
    pub ops_this_step: Vec<u64>,
}

impl StepResult {
    pub fn ops(&self) -> u64 {
        self.ops_this_step.iter().sum()
    }

    pub fn deepest(&self) -> Option<&Frame> {
        self.new_frames.last().and_then(|f| f.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct ShiftEngine {
    source: ParamSource,
    net: Arc<NetworkSpec>,
    weights_version: u64,
    // rings[0] is layer 0's input window; rings[l + 1] holds layer l's output
    rings: Vec<RingBuffer>,
    frames_seen: u64,
    counter: OpCounter,
    deepest_produced: u64,
    deepest_decoded: u64,
}

impl ShiftEngine {
    /// Engine over a private parameter source.
    pub fn new(net: NetworkSpec, deepest_retained: usize) -> Result<Self> {
        Self::with_source(&ParamSource::new(net), deepest_retained)
    }

    /// Engine primed on the source's current version.
    pub fn with_source(source: &ParamSource, deepest_retained: usize) -> Result<Self> {
        if deepest_retained == 0 {
            return invalid("deepest layer must retain at least one frame");
        }
        let (net, version) = source.current();
        let layers = net.layers();
        let mut rings = Vec::with_capacity(layers.len() + 1);
        for layer in layers {
            rings.push(RingBuffer::new(layer.window(), layer.c_in()));
        }
        rings.push(RingBuffer::new(deepest_retained, net.c_out()));
        Ok(ShiftEngine {
            source: source.clone(),
            counter: OpCounter::with_layers(layers.len()),
            net,
            weights_version: version,
            rings,
            frames_seen: 0,
            deepest_produced: 0,
            deepest_decoded: 0,
        })
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn source(&self) -> &ParamSource {
        &self.source
    }

    pub fn depth(&self) -> usize {
        self.net.depth()
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }

    pub fn weights_version(&self) -> u64 {
        self.weights_version
    }

    /// Capacity of each layer's input ring followed by the deepest output ring.
    pub fn capacities(&self) -> Vec<usize> {
        self.rings.iter().map(RingBuffer::capacity).collect()
    }

    pub fn fills(&self) -> Vec<usize> {
        self.rings.iter().map(RingBuffer::fill).collect()
    }

    /// All rings full: every further push costs exactly `depth()` kernel calls.
    pub fn is_steady(&self) -> bool {
        self.rings[..self.net.depth()].iter().all(RingBuffer::is_full)
    }

    /// Push one frame and return how many layers produced a new frame.
    ///
    /// Layers produce in order, so the result `k` means layers `0..k` each
    /// computed their newest frame and deeper layers are still warming up.
    pub fn step(&mut self, frame: &[f64]) -> Result<usize> {
        let current = self.source.version();
        if current != self.weights_version {
            return Err(Error::StaleCache {
                engine: self.weights_version,
                current,
            });
        }
        if frame.len() != self.net.c_in() {
            return invalid(format!(
                "frame has {} channels, network expects {}",
                frame.len(),
                self.net.c_in()
            ));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return invalid("frame contains non-finite values");
        }
        self.rings[0].push(frame);
        self.frames_seen += 1;

        let depth = self.net.depth();
        let mut produced = 0;
        for (l, layer) in self.net.layers().iter().enumerate() {
            if !self.rings[l].is_full() {
                break;
            }
            let (lo, hi) = self.rings.split_at_mut(l + 1);
            let src = &lo[l];
            let dst = &mut hi[0];
            conv_frame_into(layer, |tau| src.get(tau), dst.next_slot());
            dst.commit();
            self.counter.record(l);
            produced += 1;
        }
        if produced == depth {
            self.deepest_produced += 1;
        }
        Ok(produced)
    }

    /// Push one frame, reporting each layer's newly computed activation.
    pub fn push_frame(&mut self, frame: &[f64]) -> Result<StepResult> {
        let produced = self.step(frame)?;
        let depth = self.net.depth();
        let mut new_frames = Vec::with_capacity(depth);
        let mut ops = Vec::with_capacity(depth);
        for l in 0..depth {
            if l < produced {
                let f = self.rings[l + 1].newest().expect("layer just produced a frame");
                new_frames.push(Some(Frame::new(f.to_vec())));
                ops.push(1);
            } else {
                new_frames.push(None);
                ops.push(0);
            }
        }
        Ok(StepResult {
            new_frames,
            ops_this_step: ops,
        })
    }

    /// Newest reconstruction frame that can no longer change.
    ///
    /// `decoder` is the layer whose transpose maps the deepest activations
    /// back (`decoder.c_out` must equal the deepest channel count). The
    /// frame aligned with the newest deepest activation receives all `w`
    /// taps once that activation exists, so it is final. Each such frame is
    /// returned once; calling again before the next deepest frame arrives
    /// returns `None`.
    pub fn streaming_decode(&mut self, decoder: &ConvLayerParams, recon_bias: &[f64]) -> Result<Option<Frame>> {
        let deepest = &self.rings[self.net.depth()];
        if decoder.c_out() != deepest.context() {
            return invalid(format!(
                "decoder expects {} hidden channels, deepest layer has {}",
                decoder.c_out(),
                deepest.context()
            ));
        }
        if recon_bias.len() != decoder.c_in() {
            return invalid("reconstruction bias length must equal decoder c_in");
        }
        if decoder.window() > deepest.capacity() {
            return invalid(format!(
                "decoder window {} exceeds retained deepest frames {}",
                decoder.window(),
                deepest.capacity()
            ));
        }
        if deepest.fill() < decoder.window() || self.deepest_decoded == self.deepest_produced {
            return Ok(None);
        }
        let newest = deepest.fill() - 1;
        let mut out = vec![0.0; decoder.c_in()];
        adjoint_frame_into(decoder, |tau| Some(deepest.get(newest - tau)), recon_bias, &mut out);
        self.deepest_decoded = self.deepest_produced;
        Ok(Some(Frame::new(out)))
    }

    /// Publish new weights to the source and drop every cached activation.
    /// The op counter is preserved.
    pub fn invalidate(&mut self, new_net: NetworkSpec) -> Result<()> {
        if !self.net.shape_compatible(&new_net) {
            return invalid("new network is not shape-compatible with the engine");
        }
        self.source.update(new_net)?;
        self.reload();
        Ok(())
    }

    /// Adopt the source's current weights, clearing all caches.
    pub fn reload(&mut self) {
        let (net, version) = self.source.current();
        self.net = net;
        self.weights_version = version;
        self.reset();
    }

    /// Clear all caches without changing weights.
    pub fn reset(&mut self) {
        for r in &mut self.rings {
            r.clear();
        }
        self.frames_seen = 0;
        self.deepest_produced = 0;
        self.deepest_decoded = 0;
    }

    /// Every layer's cached output, oldest to newest.
    pub fn snapshot(&self) -> Vec<Sequence> {
        self.rings[1..].iter().map(RingBuffer::to_sequence).collect()
    }

    /// Retained frames of the deepest layer, oldest to newest.
    pub fn deepest(&self) -> Sequence {
        self.rings[self.net.depth()].to_sequence()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{forward_prefix, full_conv_adjoint, Activation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(rng: &mut ChaCha8Rng, ctx: usize, channels: &[usize], windows: &[usize]) -> NetworkSpec {
        NetworkSpec::random(ctx, channels, windows, Activation::Tanh, 0.5, rng).unwrap()
    }

    fn frame(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
        (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn fresh_engine_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = ShiftEngine::new(net(&mut rng, 2, &[3, 2], &[3, 2]), 5).unwrap();
        assert_eq!(e.capacities(), vec![3, 2, 5]);
        assert_eq!(e.fills(), vec![0, 0, 0]);
        assert_eq!(e.frames_seen(), 0);
        assert!(e.snapshot().iter().all(Sequence::is_empty));
        assert!(ShiftEngine::new(net(&mut rng, 2, &[2], &[2]), 0).is_err());
    }

    #[test]
    fn warm_up_then_one_op_per_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e = ShiftEngine::new(net(&mut rng, 2, &[2], &[4]), 3).unwrap();
        for _ in 0..3 {
            let r = e.push_frame(&frame(&mut rng, 2)).unwrap();
            assert_eq!(r.new_frames, vec![None]);
            assert_eq!(r.ops(), 0);
        }
        for _ in 0..5 {
            let r = e.push_frame(&frame(&mut rng, 2)).unwrap();
            assert!(r.deepest().is_some());
            assert_eq!(r.ops_this_step, vec![1]);
        }
        assert_eq!(e.counter().total(), 5);
    }

    #[test]
    fn layers_activate_progressively() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = ShiftEngine::new(net(&mut rng, 1, &[2, 2, 2], &[3, 2, 4]), 2).unwrap();
        // layer l first fires at push number 1 + sum_{k<=l}(w_k - 1)
        let first = [3, 4, 7];
        for push in 1..=10 {
            let r = e.push_frame(&frame(&mut rng, 1)).unwrap();
            for l in 0..3 {
                assert_eq!(r.ops_this_step[l], (push >= first[l]) as u64, "push {push} layer {l}");
            }
        }
        assert!(e.is_steady());
    }

    #[test]
    fn rejects_wrong_frame_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut e = ShiftEngine::new(net(&mut rng, 3, &[2], &[2]), 1).unwrap();
        assert!(matches!(e.push_frame(&[1.0, 2.0]), Err(Error::InvalidInput(_))));
        assert_eq!(e.frames_seen(), 0);
    }

    #[test]
    fn stale_weights_are_refused_until_reload() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n0 = net(&mut rng, 2, &[2], &[2]);
        let n1 = net(&mut rng, 2, &[2], &[2]);
        let src = ParamSource::new(n0);
        let mut a = ShiftEngine::with_source(&src, 4).unwrap();
        let mut b = ShiftEngine::with_source(&src, 4).unwrap();
        for _ in 0..3 {
            let f = frame(&mut rng, 2);
            a.push_frame(&f).unwrap();
            b.push_frame(&f).unwrap();
        }
        a.invalidate(n1).unwrap();
        assert_eq!(a.weights_version(), 1);
        assert!(a.fills().iter().all(|&f| f == 0));
        assert_eq!(a.counter().total(), 2);
        assert!(matches!(
            b.push_frame(&frame(&mut rng, 2)),
            Err(Error::StaleCache { engine: 0, current: 1 })
        ));
        b.reload();
        assert!(b.push_frame(&frame(&mut rng, 2)).is_ok());
    }

    #[test]
    fn invalidate_rejects_other_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut e = ShiftEngine::new(net(&mut rng, 2, &[2], &[2]), 4).unwrap();
        assert!(e.invalidate(net(&mut rng, 2, &[3], &[2])).is_err());
        assert!(e.invalidate(net(&mut rng, 2, &[2], &[3])).is_err());
        assert_eq!(e.weights_version(), 0);
    }

    #[test]
    fn snapshot_is_pure_and_matches_naive_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = net(&mut rng, 3, &[4, 2], &[3, 3]);
        let mut e = ShiftEngine::new(spec.clone(), 4).unwrap();
        let mut stream = Sequence::empty(3);
        for _ in 0..12 {
            let f = frame(&mut rng, 3);
            stream.push(&f).unwrap();
            e.push_frame(&f).unwrap();
        }
        let s1 = e.snapshot();
        assert_eq!(s1, e.snapshot());
        let naive = forward_prefix(&spec, &stream, &mut OpCounter::new()).unwrap();
        for (cached, full) in s1.iter().zip(&naive) {
            assert_eq!(cached, &full.tail(cached.len()));
        }
    }

    #[test]
    fn decode_emits_each_fixed_frame_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = net(&mut rng, 2, &[3], &[1]);
        let dec = ConvLayerParams::random(2, 2, 3, Activation::Tanh, 0.5, &mut rng).unwrap();
        let bias = [0.1, -0.1];
        let mut e = ShiftEngine::new(spec, 4).unwrap();

        e.push_frame(&frame(&mut rng, 2)).unwrap();
        assert_eq!(e.streaming_decode(&dec, &bias).unwrap(), None);

        e.push_frame(&frame(&mut rng, 2)).unwrap();
        let hidden = e.deepest();
        let full = full_conv_adjoint(&dec, &hidden, &bias).unwrap();
        let fixed = e.streaming_decode(&dec, &bias).unwrap().unwrap();
        assert_eq!(&*fixed, full.frame(1));
        assert_eq!(e.streaming_decode(&dec, &bias).unwrap(), None);

        e.push_frame(&frame(&mut rng, 2)).unwrap();
        let next = e.streaming_decode(&dec, &bias).unwrap().unwrap();
        assert_ne!(next, fixed);
        let full = full_conv_adjoint(&dec, &e.deepest(), &bias).unwrap();
        assert_eq!(&*next, full.frame(2));
    }

    #[test]
    fn decode_checks_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut e = ShiftEngine::new(net(&mut rng, 2, &[3], &[1]), 2).unwrap();
        let wrong_hidden = ConvLayerParams::random(2, 2, 2, Activation::Tanh, 0.5, &mut rng).unwrap();
        assert!(e.streaming_decode(&wrong_hidden, &[0.0; 2]).is_err());
        let too_wide = ConvLayerParams::random(3, 2, 3, Activation::Tanh, 0.5, &mut rng).unwrap();
        assert!(e.streaming_decode(&too_wide, &[0.0; 2]).is_err());
    }
}
