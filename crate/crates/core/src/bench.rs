//! Wall-clock comparison of naive and cached evaluation on a sliding stream.
//!
//! Per sweep point: build a network of `n_layers` layers that all map
//! `context` channels to `context` channels with window `window`, bring
//! both evaluators to steady state on a seeded stream, run `warmup`
//! untimed iterations, then time `runs` iterations of `steps` new frames
//! each. Naive mode re-evaluates the whole `frames`-long window per new
//! frame; shift mode pushes the frame into a [`ShiftEngine`].

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::complexity::CostParams;
use crate::conv::{forward_stack, Activation, NetworkSpec, OpCounter, Sequence};
use crate::error::{Error, Result};
use crate::shift::ShiftEngine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Naive,
    Shift,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Naive => "naive",
            BenchMode::Shift => "shift",
        }
    }
}

fn default_modes() -> Vec<BenchMode> {
    vec![BenchMode::Naive, BenchMode::Shift]
}

/// Cartesian sweep over the listed values.
#[derive(Debug, Clone, Deserialize)]
pub struct Sweep {
    #[serde(default = "default_modes")]
    pub modes: Vec<BenchMode>,
    pub n_layers: Vec<usize>,
    pub window: Vec<usize>,
    pub context: Vec<usize>,
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "BenchConfig::default_warmup")]
    pub warmup: usize,
    #[serde(default = "BenchConfig::default_runs")]
    pub runs: usize,
    #[serde(default = "BenchConfig::default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Vec<Sweep>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: Self::default_warmup(),
            runs: Self::default_runs(),
            steps: Self::default_steps(),
            seed: 0,
            sweep: Vec::new(),
        }
    }
}

impl BenchConfig {
    fn default_warmup() -> usize {
        3
    }

    fn default_runs() -> usize {
        10
    }

    fn default_steps() -> usize {
        20
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("bench config: {e}")))?;
        if cfg.runs == 0 || cfg.steps == 0 {
            return Err(Error::Parse("bench config: runs and steps must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn points(&self) -> Vec<BenchPoint> {
        let mut out = Vec::new();
        for s in &self.sweep {
            for &n_layers in &s.n_layers {
                for &window in &s.window {
                    for &context in &s.context {
                        for &frames in &s.frames {
                            for &mode in &s.modes {
                                out.push(BenchPoint {
                                    mode,
                                    n_layers,
                                    window,
                                    context,
                                    frames,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BenchPoint {
    pub mode: BenchMode,
    pub n_layers: usize,
    pub window: usize,
    pub context: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub point: BenchPoint,
    pub steps: usize,
    /// Mean over runs of the per-step wall time, nanoseconds.
    pub mean_ns: f64,
    pub std_ns: f64,
    pub ops_per_step: f64,
    pub skipped: Option<String>,
}

impl BenchRecord {
    pub const HEADER: &'static str = "mode,n_layers,window,context,frames,steps,mean_ns,std_ns,ops_per_step,skipped";

    pub fn csv_row(&self) -> String {
        let p = &self.point;
        format!(
            "{},{},{},{},{},{},{:.1},{:.1},{},{}",
            p.mode.name(),
            p.n_layers,
            p.window,
            p.context,
            p.frames,
            self.steps,
            self.mean_ns,
            self.std_ns,
            self.ops_per_step,
            self.skipped.as_deref().unwrap_or("")
        )
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn skipped(point: BenchPoint, steps: usize, reason: String) -> BenchRecord {
    BenchRecord {
        point,
        steps,
        mean_ns: f64::NAN,
        std_ns: f64::NAN,
        ops_per_step: f64::NAN,
        skipped: Some(reason),
    }
}

/// Time one sweep point.
pub fn run_point(point: BenchPoint, cfg: &BenchConfig) -> Result<BenchRecord> {
    let BenchPoint {
        mode,
        n_layers,
        window,
        context,
        frames,
    } = point;
    if n_layers == 0 || window == 0 || context == 0 {
        return Ok(skipped(point, cfg.steps, "zero-sized geometry".into()));
    }
    let cost = CostParams::new(n_layers, frames, window);
    if !cost.input_fixed_feasible() {
        return Ok(skipped(
            point,
            cfg.steps,
            format!("frames {frames} < {} needed by {n_layers} layers of window {window}", n_layers * (window - 1) + 1),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / ((window * context) as f64).sqrt();
    let net = NetworkSpec::random(
        context,
        &vec![context; n_layers],
        &vec![window; n_layers],
        Activation::Tanh,
        scale,
        &mut rng,
    )?;
    let total = frames + (cfg.warmup + cfg.runs) * cfg.steps;
    let stream: Vec<f64> = (0..total * context).map(|_| rng.random_range(-1.0..1.0)).collect();
    let frame = |t: usize| &stream[t * context..(t + 1) * context];

    let mut per_run = Vec::with_capacity(cfg.runs);
    let mut ops = 0u64;
    match mode {
        BenchMode::Naive => {
            // window ending at frame t (inclusive)
            let eval = |t: usize, counter: &mut OpCounter| -> Result<()> {
                let start = t + 1 - frames;
                let input = Sequence::from_flat(context, stream[start * context..(t + 1) * context].to_vec())?;
                black_box(forward_stack(&net, &input, counter)?);
                Ok(())
            };
            let mut t = frames - 1;
            let mut scratch = OpCounter::new();
            for _ in 0..cfg.warmup * cfg.steps {
                t += 1;
                eval(t, &mut scratch)?;
            }
            for _ in 0..cfg.runs {
                let mut counter = OpCounter::new();
                let started = Instant::now();
                for _ in 0..cfg.steps {
                    t += 1;
                    eval(t, &mut counter)?;
                }
                per_run.push(started.elapsed().as_nanos() as f64 / cfg.steps as f64);
                ops += counter.total();
            }
        }
        BenchMode::Shift => {
            let retained = frames - n_layers * (window - 1);
            let mut engine = ShiftEngine::new(net, retained)?;
            for t in 0..frames {
                engine.step(frame(t))?;
            }
            let mut t = frames;
            for _ in 0..cfg.warmup * cfg.steps {
                engine.step(frame(t))?;
                t += 1;
            }
            for _ in 0..cfg.runs {
                let before = engine.counter().total();
                let started = Instant::now();
                for _ in 0..cfg.steps {
                    black_box(engine.step(black_box(frame(t)))?);
                    t += 1;
                }
                per_run.push(started.elapsed().as_nanos() as f64 / cfg.steps as f64);
                ops += engine.counter().total() - before;
            }
        }
    }
    let (mean_ns, std_ns) = mean_std(&per_run);
    Ok(BenchRecord {
        point,
        steps: cfg.steps,
        mean_ns,
        std_ns,
        ops_per_step: ops as f64 / (cfg.runs * cfg.steps) as f64,
        skipped: None,
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.points().into_iter().map(|p| run_point(p, cfg)).collect()
}

/// Smallest `frames` at which shift mode beat naive mode for one geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crossover {
    pub n_layers: usize,
    pub window: usize,
    pub context: usize,
    pub frames: Option<usize>,
}

pub fn crossovers(records: &[BenchRecord]) -> Vec<Crossover> {
    let mut keys: Vec<(usize, usize, usize)> = Vec::new();
    for r in records {
        let k = (r.point.n_layers, r.point.window, r.point.context);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(n_layers, window, context)| {
            let timed = |mode: BenchMode, frames: usize| {
                records.iter().find(|r| {
                    r.skipped.is_none()
                        && r.point
                            == BenchPoint {
                                mode,
                                n_layers,
                                window,
                                context,
                                frames,
                            }
                })
            };
            let mut frames: Vec<usize> = records
                .iter()
                .filter(|r| (r.point.n_layers, r.point.window, r.point.context) == (n_layers, window, context))
                .map(|r| r.point.frames)
                .collect();
            frames.sort_unstable();
            frames.dedup();
            let hit = frames.into_iter().find(|&f| match (timed(BenchMode::Shift, f), timed(BenchMode::Naive, f)) {
                (Some(s), Some(n)) => s.mean_ns < n.mean_ns,
                _ => false,
            });
            Crossover {
                n_layers,
                window,
                context,
                frames: hit,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::count_normal_input_fixed;

    fn small_cfg() -> BenchConfig {
        BenchConfig::from_toml(
            r#"
            warmup = 1
            runs = 2
            steps = 3
            [[sweep]]
            n_layers = [2]
            window = [3]
            context = [4]
            frames = [4, 5, 9, 20]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn ops_per_step_follow_the_cost_model() {
        let cfg = small_cfg();
        let recs = run_bench(&cfg).unwrap();
        assert_eq!(recs.len(), 8);
        for r in &recs {
            let p = CostParams::new(r.point.n_layers, r.point.frames, r.point.window);
            match (r.point.mode, &r.skipped) {
                (_, Some(reason)) => {
                    assert_eq!(r.point.frames, 4);
                    assert!(reason.contains("needed"));
                }
                (BenchMode::Shift, None) => assert_eq!(r.ops_per_step, 2.0),
                (BenchMode::Naive, None) => {
                    assert_eq!(r.ops_per_step, count_normal_input_fixed(p).unwrap() as f64)
                }
            }
        }
    }

    #[test]
    fn config_defaults_follow_protocol() {
        let cfg = BenchConfig::from_toml("[[sweep]]\nn_layers=[1]\nwindow=[2]\ncontext=[1]\nframes=[3]\n").unwrap();
        assert_eq!((cfg.warmup, cfg.runs), (3, 10));
        assert_eq!(cfg.points().len(), 2);
        assert!(BenchConfig::from_toml("runs = 0").is_err());
        assert!(BenchConfig::from_toml("[[sweep]]\nmodes=[\"gpu\"]").is_err());
    }

    #[test]
    fn crossover_picks_first_faster_point() {
        let rec = |mode, frames, mean_ns| BenchRecord {
            point: BenchPoint {
                mode,
                n_layers: 2,
                window: 3,
                context: 4,
                frames,
            },
            steps: 1,
            mean_ns,
            std_ns: 0.0,
            ops_per_step: 0.0,
            skipped: None,
        };
        let recs = vec![
            rec(BenchMode::Naive, 10, 5.0),
            rec(BenchMode::Shift, 10, 8.0),
            rec(BenchMode::Naive, 20, 9.0),
            rec(BenchMode::Shift, 20, 8.0),
            rec(BenchMode::Naive, 30, 15.0),
            rec(BenchMode::Shift, 30, 8.0),
        ];
        assert_eq!(crossovers(&recs)[0].frames, Some(20));
        assert_eq!(crossovers(&recs[..2])[0].frames, None);
    }
}
