//! Independent scalar oracles shared by the integration tests. Nothing here
//! calls into the library's kernels.
#![allow(dead_code)]

use deepshift::cae::CaeModel;
use deepshift::{Activation, ConvLayerParams, NetworkSpec, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_seq(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Sequence {
    Sequence::from_flat(c, (0..t * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_frame(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random stack with every layer sharing `w`; channel counts drawn from `1..=c_max`.
pub fn random_net(rng: &mut ChaCha8Rng, n: usize, w: usize, c_max: usize) -> NetworkSpec {
    let context = rng.random_range(1..=c_max);
    let channels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=c_max)).collect();
    NetworkSpec::random(context, &channels, &vec![w; n], Activation::Tanh, 0.5, rng).unwrap()
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

/// Scalar valid convolution: `y[t][o] = act(b[o] + sum_{tau,i} W[tau][o][i] x[t+tau][i])`.
pub fn oracle_valid(layer: &ConvLayerParams, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = layer.window();
    if x.len() < w {
        return Vec::new();
    }
    (0..x.len() - w + 1)
        .map(|t| {
            (0..layer.c_out())
                .map(|o| {
                    let mut s = layer.bias()[o];
                    for tau in 0..w {
                        for i in 0..layer.c_in() {
                            s += layer.weight(tau, o, i) * x[t + tau][i];
                        }
                    }
                    act(layer.activation(), s)
                })
                .collect()
        })
        .collect()
}

pub fn frames(s: &Sequence) -> Vec<Vec<f64>> {
    s.frames().map(|f| f.to_vec()).collect()
}

/// Flat CAE parameters split as `(W[tau][o][i], encoder bias, decoder bias)`.
pub struct CaeParams {
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub act: Activation,
    pub theta: Vec<f64>,
}

impl CaeParams {
    pub fn of(model: &CaeModel) -> Self {
        let e = model.encoder();
        CaeParams {
            w: e.window(),
            c_in: e.c_in(),
            c_out: e.c_out(),
            act: e.activation(),
            theta: model.params_flat(),
        }
    }

    fn wt(&self, theta: &[f64], tau: usize, o: usize, i: usize) -> f64 {
        theta[(tau * self.c_out + o) * self.c_in + i]
    }

    fn b(&self, theta: &[f64], o: usize) -> f64 {
        theta[self.w * self.c_out * self.c_in + o]
    }

    fn c(&self, theta: &[f64], i: usize) -> f64 {
        theta[self.w * self.c_out * self.c_in + self.c_out + i]
    }

    fn hidden_frame(&self, theta: &[f64], x: &[Vec<f64>], t: usize) -> Vec<f64> {
        (0..self.c_out)
            .map(|o| {
                let mut s = self.b(theta, o);
                for tau in 0..self.w {
                    for i in 0..self.c_in {
                        s += self.wt(theta, tau, o, i) * x[t + tau][i];
                    }
                }
                act(self.act, s)
            })
            .collect()
    }

    /// Summed squared reconstruction error with tied weights `theta`. When
    /// `frozen` is given, every hidden frame but the newest is computed from
    /// `frozen` instead, so derivatives only flow through the newest frame.
    pub fn error(&self, theta: &[f64], frozen: Option<&[f64]>, x: &[Vec<f64>]) -> f64 {
        let t_h = x.len() - self.w + 1;
        let h: Vec<Vec<f64>> = (0..t_h)
            .map(|t| {
                let src = match frozen {
                    Some(f) if t + 1 < t_h => f,
                    _ => theta,
                };
                self.hidden_frame(src, x, t)
            })
            .collect();
        let mut e = 0.0;
        for (s, xs) in x.iter().enumerate() {
            for i in 0..self.c_in {
                let mut z = self.c(theta, i);
                for tau in 0..self.w {
                    if s >= tau && s - tau < t_h {
                        for o in 0..self.c_out {
                            z += self.wt(theta, tau, o, i) * h[s - tau][o];
                        }
                    }
                }
                let d = xs[i] - act(self.act, z);
                e += d * d;
            }
        }
        e
    }

    /// Central differences of [`CaeParams::error`] at `self.theta`.
    pub fn fd_gradient(&self, x: &[Vec<f64>], shift: bool, step: f64) -> Vec<f64> {
        let base = self.theta.clone();
        let frozen = shift.then_some(base.as_slice());
        (0..base.len())
            .map(|k| {
                let mut p = base.clone();
                p[k] = base[k] + step;
                let up = self.error(&p, frozen, x);
                p[k] = base[k] - step;
                let down = self.error(&p, frozen, x);
                (up - down) / (2.0 * step)
            })
            .collect()
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
