use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cae::mlp::{MlpClassifier, MlpConfig};
use crate::conv::Sequence;
use crate::error::{invalid, Error, Result};

/// Labeled sequences sharing one context size and length.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sequence>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sequence>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return invalid("dataset is empty");
        }
        if samples.len() != labels.len() {
            return invalid("one label per sample required");
        }
        if let Some(y) = labels.iter().find(|&&y| y >= classes) {
            return invalid(format!("label {y} out of range for {classes} classes"));
        }
        let (c, t) = (samples[0].context(), samples[0].len());
        if t == 0 {
            return invalid("samples must contain at least one frame");
        }
        if samples.iter().any(|s| s.context() != c || s.len() != t) {
            return invalid("all samples must share context size and length; resample first");
        }
        Ok(LabeledDataset {
            samples,
            labels,
            classes,
        })
    }

    /// Build from sequences of differing lengths, resampling each to `len` frames.
    pub fn from_ragged(samples: Vec<Sequence>, labels: Vec<usize>, classes: usize, len: usize) -> Result<Self> {
        let resampled = samples.iter().map(|s| resample(s, len)).collect::<Result<Vec<_>>>()?;
        Self::new(resampled, labels, classes)
    }

    pub fn samples(&self) -> &[Sequence] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn context(&self) -> usize {
        self.samples[0].context()
    }

    pub fn time_len(&self) -> usize {
        self.samples[0].len()
    }

    /// Number of distinct labels present.
    pub fn observed_classes(&self) -> usize {
        let mut seen = vec![false; self.classes];
        for &y in &self.labels {
            seen[y] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Linear interpolation of a sequence onto `len` evenly spaced frames.
pub fn resample(s: &Sequence, len: usize) -> Result<Sequence> {
    if len == 0 {
        return invalid("resample length must be positive");
    }
    let t = s.len();
    if t == 0 {
        return invalid("cannot resample an empty sequence");
    }
    if t == len {
        return Ok(s.clone());
    }
    let c = s.context();
    let mut out = Sequence::zeros(len, c);
    for k in 0..len {
        let pos = if len == 1 {
            0.0
        } else {
            k as f64 * (t - 1) as f64 / (len - 1) as f64
        };
        let lo = (pos.floor() as usize).min(t - 1);
        let hi = (lo + 1).min(t - 1);
        let frac = pos - lo as f64;
        let (a, b) = (s.frame(lo), s.frame(hi));
        for (i, v) in out.frame_mut(k).iter_mut().enumerate() {
            *v = a[i] + frac * (b[i] - a[i]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub classes: usize,
    pub samples_per_class: usize,
    pub context: usize,
    pub len: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            classes: 10,
            samples_per_class: 50,
            context: 4,
            len: 20,
            noise: 0.2,
            seed: 0,
        }
    }
}

/// Each class is a per-channel sinusoid with class-specific frequency,
/// phase and amplitude; samples add seeded Gaussian noise.
pub fn synth_dataset(p: &SynthParams) -> Result<LabeledDataset> {
    if p.classes == 0 || p.samples_per_class == 0 || p.context == 0 || p.len == 0 {
        return invalid("synthetic dataset counts must all be at least 1");
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return invalid("noise amplitude must be finite and non-negative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // (frequency in cycles per sequence, phase, amplitude) per class and channel
    let shapes: Vec<Vec<(f64, f64, f64)>> = (0..p.classes)
        .map(|_| {
            (0..p.context)
                .map(|_| {
                    (
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.0..TAU),
                        rng.random_range(0.5..1.0),
                    )
                })
                .collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(p.classes * p.samples_per_class);
    let mut labels = Vec::with_capacity(samples.capacity());
    for _ in 0..p.samples_per_class {
        for (label, shape) in shapes.iter().enumerate() {
            let mut s = Sequence::zeros(p.len, p.context);
            for t in 0..p.len {
                let frame = s.frame_mut(t);
                for (ch, &(f, phi, a)) in shape.iter().enumerate() {
                    let clean = a * (TAU * f * t as f64 / p.len as f64 + phi).sin();
                    let n: f64 = StandardNormal.sample(&mut rng);
                    frame[ch] = clean + p.noise * n;
                }
            }
            samples.push(s);
            labels.push(label);
        }
    }
    LabeledDataset::new(samples, labels, p.classes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    /// Random `train_fraction` of the data for training (of which
    /// `validation_fraction` of the whole set is held back for early
    /// stopping), the rest for testing.
    HoldOut {
        train_fraction: f64,
        validation_fraction: f64,
    },
    /// `k` folds; each fold is the test set once, and `validation_fraction`
    /// of the whole set following it (cyclically) is used for early stopping.
    KFold { k: usize, validation_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

impl SplitSpec {
    pub fn holdout(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            kind: SplitKind::HoldOut {
                train_fraction,
                validation_fraction: 0.1,
            },
            seed,
        }
    }

    pub fn kfold(k: usize, seed: u64) -> Self {
        SplitSpec {
            kind: SplitKind::KFold {
                k,
                validation_fraction: 0.1,
            },
            seed,
        }
    }

    /// Parse `holdout:0.6` or `kfold:10`, with an optional `:validation` suffix.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("split `{s}` is missing a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("split `{s}`: {e}")))
        };
        let validation_fraction = if parts.len() > 2 { num(2)? } else { 0.1 };
        let kind = match parts[0] {
            "holdout" => SplitKind::HoldOut {
                train_fraction: num(1)?,
                validation_fraction,
            },
            "kfold" => {
                let k = num(1)?;
                if k.fract() != 0.0 || k < 0.0 {
                    return Err(Error::Parse(format!("fold count in `{s}` must be a whole number")));
                }
                SplitKind::KFold {
                    k: k as usize,
                    validation_fraction,
                }
            }
            other => return Err(Error::Parse(format!("unknown split kind `{other}`"))),
        };
        Ok(SplitSpec { kind, seed })
    }
}

/// Index sets for one train/validation/test round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn split_error<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidSplit(msg.into()))
}

fn check_fraction(name: &str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..1.0).contains(&v) } else { v > 0.0 && v < 1.0 };
    if !ok {
        return split_error(format!("{name} {v} must lie in (0, 1)"));
    }
    Ok(())
}

/// Partition `n` sample indices according to `spec`.
pub fn make_folds(n: usize, spec: &SplitSpec) -> Result<Vec<Fold>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let folds = match spec.kind {
        SplitKind::HoldOut {
            train_fraction,
            validation_fraction,
        } => {
            check_fraction("train fraction", train_fraction, false)?;
            check_fraction("validation fraction", validation_fraction, true)?;
            let n_train = (train_fraction * n as f64).round() as usize;
            let n_val = (validation_fraction * n as f64).round() as usize;
            if n_train <= n_val || n_train >= n {
                return split_error(format!(
                    "hold-out split of {n} samples leaves an empty training or test set"
                ));
            }
            let (train_all, test) = order.split_at(n_train);
            let (fit, val) = train_all.split_at(n_train - n_val);
            vec![Fold {
                train: fit.to_vec(),
                validation: val.to_vec(),
                test: test.to_vec(),
            }]
        }
        SplitKind::KFold { k, validation_fraction } => {
            if k < 2 {
                return split_error(format!("k-fold needs k >= 2, got {k}"));
            }
            if k > n {
                return split_error(format!("{k} folds over {n} samples leaves an empty fold"));
            }
            check_fraction("validation fraction", validation_fraction, true)?;
            let n_val = (validation_fraction * n as f64).round() as usize;
            let bounds: Vec<usize> = (0..=k).map(|i| i * n / k).collect();
            let mut out = Vec::with_capacity(k);
            for i in 0..k {
                let (lo, hi) = (bounds[i], bounds[i + 1]);
                let test = order[lo..hi].to_vec();
                let rest: Vec<usize> = order[hi..].iter().chain(&order[..lo]).copied().collect();
                if rest.len() <= n_val {
                    return split_error("validation set would consume all training data");
                }
                let (val, train) = rest.split_at(n_val);
                out.push(Fold {
                    train: train.to_vec(),
                    validation: val.to_vec(),
                    test,
                });
            }
            out
        }
    };
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    /// Test error per fold (one entry for hold-out).
    pub fold_errors: Vec<f64>,
}

impl ClassificationReport {
    pub fn mean_error(&self) -> f64 {
        self.fold_errors.iter().sum::<f64>() / self.fold_errors.len() as f64
    }
}

/// Train an MLP per fold and measure the test error fraction.
pub fn train_classifier(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    split: &SplitSpec,
    config: &MlpConfig,
) -> Result<ClassificationReport> {
    if features.len() != labels.len() {
        return invalid("one label per feature vector required");
    }
    if classes < 2 {
        return invalid("classification needs at least two classes");
    }
    let folds = make_folds(features.len(), split)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let mut fold_errors = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let (tx, ty) = pick(&fold.train);
        let (vx, vy) = pick(&fold.validation);
        let (sx, sy) = pick(&fold.test);
        let mut rng = ChaCha8Rng::seed_from_u64(split.seed.wrapping_add(1 + f as u64));
        let val = (!vx.is_empty()).then_some((vx.as_slice(), vy.as_slice()));
        let model = MlpClassifier::fit(&tx, &ty, classes, val, config, &mut rng)?;
        fold_errors.push(model.error_rate(&sx, &sy));
    }
    Ok(ClassificationReport { fold_errors })
}
