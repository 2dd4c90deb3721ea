//! Convolution-operation counts for naive and cached evaluation.
//!
//! Two naive scenarios are modelled. In the first the deepest layer's
//! length `t` is fixed and shallower layers are stacked on top, each one
//! `w - 1` frames longer. In the second the input length `t_x` is fixed
//! and each deeper layer is `w - 1` frames shorter. Both counts are
//! computed as explicit per-layer sums; the printed closed forms are kept
//! separately for reconciliation because they disagree with the sums once
//! `n >= 2`.

use crate::conv::{forward_stack, Activation, ConvLayerParams, NetworkSpec, OpCounter, Sequence};
use crate::error::{Error, Result};
use crate::shift::ShiftEngine;

/// `n` layers, time anchor `t`, window `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CostParams {
    pub n: usize,
    pub t: usize,
    pub w: usize,
}

impl CostParams {
    pub fn new(n: usize, t: usize, w: usize) -> Self {
        CostParams { n, t, w }
    }

    /// Scenario B is feasible when the deepest layer keeps at least one frame.
    pub fn input_fixed_feasible(&self) -> bool {
        self.n >= 1 && self.w >= 1 && self.t > self.n * (self.w - 1)
    }
}

/// Naive ops with the deepest layer's length fixed at `t`:
/// `sum_{k=0}^{n-1} (t + k(w-1))`.
pub fn count_normal_deepest_fixed(p: CostParams) -> u64 {
    (0..p.n).map(|k| (p.t + k * (p.w.saturating_sub(1))) as u64).sum()
}

/// Naive ops with the input length fixed at `t`:
/// `sum_{k=1}^{n} (t - k(w-1))`.
pub fn count_normal_input_fixed(p: CostParams) -> Result<u64> {
    if !p.input_fixed_feasible() {
        return Err(Error::InfeasibleStack { n: p.n, t: p.t, w: p.w });
    }
    Ok((1..=p.n).map(|k| (p.t - k * (p.w - 1)) as u64).sum())
}

/// Steady-state ops per new frame with cached activations: one per layer.
pub fn count_deep_shifting(p: CostParams) -> u64 {
    p.n as u64
}

/// Average naive ops per layer relative to one cached op per layer:
/// `t - (n+1)(w-1)/2`.
pub fn speedup_factor(p: CostParams) -> Result<f64> {
    if !p.input_fixed_feasible() {
        return Err(Error::InfeasibleStack { n: p.n, t: p.t, w: p.w });
    }
    Ok(p.t as f64 - (p.n + 1) as f64 * (p.w - 1) as f64 / 2.0)
}

/// The two closed forms as printed, `(A, B)`:
/// `A = n t + (n-1)(n-2)(w-1)/2`, `B = n t - n(n-1)(w-1)/2`.
pub fn printed_closed_forms(p: CostParams) -> (i64, i64) {
    let (n, t, w) = (p.n as i64, p.t as i64, p.w as i64);
    let a = n * t + (n - 1) * (n - 2) * (w - 1) / 2;
    let b = n * t - n * (n - 1) * (w - 1) / 2;
    (a, b)
}

/// One row of the reconciliation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconciliation {
    pub params: CostParams,
    pub series_a: u64,
    pub closed_a: i64,
    /// `None` when scenario B is infeasible for these parameters.
    pub series_b: Option<u64>,
    pub closed_b: i64,
    pub deep_shifting: u64,
    pub speedup: Option<f64>,
    pub counter_a: u64,
    pub counter_b: Option<u64>,
}

impl Reconciliation {
    pub fn closed_a_matches(&self) -> bool {
        self.closed_a == self.series_a as i64
    }

    pub fn closed_b_matches(&self) -> Option<bool> {
        self.series_b.map(|s| self.closed_b == s as i64)
    }

    pub fn series_a_matches_counter(&self) -> bool {
        self.series_a == self.counter_a
    }

    pub fn series_b_matches_counter(&self) -> Option<bool> {
        Some(self.series_b? == self.counter_b?)
    }
}

fn counting_net(n: usize, w: usize) -> Result<NetworkSpec> {
    let layer = ConvLayerParams::new(w, 1, 1, vec![0.0; w], vec![0.0], Activation::Identity)?;
    NetworkSpec::new(vec![layer; n])
}

/// Ops counted by a live naive pass of `n` layers of window `w` over `t_in` frames.
pub fn measure_naive_ops(n: usize, w: usize, t_in: usize) -> Result<u64> {
    let net = counting_net(n, w)?;
    let mut counter = OpCounter::new();
    forward_stack(&net, &Sequence::zeros(t_in, 1), &mut counter)?;
    Ok(counter.total())
}

/// Ops counted by a live streaming engine for one push once all layers are warm.
pub fn measure_steady_shift_ops(n: usize, w: usize) -> Result<u64> {
    let net = counting_net(n, w)?;
    let mut engine = ShiftEngine::new(net, 1)?;
    while !engine.is_steady() {
        engine.step(&[0.0])?;
    }
    Ok(engine.step(&[0.0])? as u64)
}

/// Series, closed forms and live counters for one parameter point.
pub fn reconcile(p: CostParams) -> Result<Reconciliation> {
    if p.n == 0 || p.t == 0 || p.w == 0 {
        return Err(Error::InvalidInput(format!("n, t and w must be positive, got {p:?}")));
    }
    let series_a = count_normal_deepest_fixed(p);
    let (closed_a, closed_b) = printed_closed_forms(p);
    let counter_a = measure_naive_ops(p.n, p.w, p.t + p.n * (p.w - 1))?;
    let (series_b, speedup, counter_b) = if p.input_fixed_feasible() {
        (
            Some(count_normal_input_fixed(p)?),
            Some(speedup_factor(p)?),
            Some(measure_naive_ops(p.n, p.w, p.t)?),
        )
    } else {
        (None, None, None)
    };
    Ok(Reconciliation {
        params: p,
        series_a,
        closed_a,
        series_b,
        closed_b,
        deep_shifting: count_deep_shifting(p),
        speedup,
        counter_a,
        counter_b,
    })
}
