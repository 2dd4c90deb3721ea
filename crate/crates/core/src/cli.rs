//! Command-line driver. Every CSV it emits starts with a `#` comment line
//! recording the tool version, seed and full command line.
//!
//! Exit codes: 0 success (or verified), 1 verification failure, 2 usage,
//! parse or runtime error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{crossovers, run_bench, BenchConfig, BenchRecord};
use crate::cae::{
    encode_features, run_pipeline, synth_dataset, train, CaeModel, CaeShape, LabeledDataset, MlpConfig, SplitSpec,
    SynthParams, TrainConfig, TrainMode,
};
use crate::complexity::{reconcile, CostParams};
use crate::conv::{forward_prefix, Activation, NetworkSpec, OpCounter, Sequence};
use crate::error::{Error, Result};
use crate::io::{read_dataset_file, write_dataset, ModelFile};
use crate::shift::ShiftEngine;

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "deepshift", version, about = "Streaming temporal convolution with cached activations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream seeded frames through the cached and naive paths and compare them bit for bit.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Frames retained in the deepest layer.
        #[arg(long, default_value_t = 8)]
        retain: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time naive and cached evaluation over a sweep described by a TOML file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operation-count reconciliation report over an (n, t, w) grid.
    Count {
        /// Layer counts, e.g. `1-4` or `1,2,5`.
        #[arg(long, default_value = "1-4")]
        n: String,
        #[arg(long, default_value = "1-8")]
        t: String,
        #[arg(long, default_value = "1-4")]
        w: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train auto-encoders and emit per-epoch reconstruction loss.
    Train(TrainArgs),
    /// Train auto-encoders, encode the data and evaluate an MLP classifier.
    Classify {
        #[command(flatten)]
        train: TrainArgs,
        /// `holdout:<train fraction>` or `kfold:<k>`, optional `:<validation fraction>`.
        #[arg(long, default_value = "holdout:0.6")]
        split: String,
        #[arg(long, default_value_t = 30)]
        mlp_hidden: usize,
        #[arg(long, default_value_t = 500)]
        mlp_epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        mlp_lr: f64,
    },
    /// Write a synthetic labeled dataset as CSV.
    GenData {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random network as a model file.
    GenModel {
        #[arg(long, default_value_t = 4)]
        context: usize,
        /// Output channels per layer, comma separated.
        #[arg(long, default_value = "4,4")]
        channels: String,
        /// Window per layer, comma separated.
        #[arg(long, default_value = "3,3")]
        windows: String,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
        #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
        activation: ActivationArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Identity,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Identity => Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Regular,
    Shiftnet,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<TrainMode> {
        match self {
            ModeArg::Regular => vec![TrainMode::Regular],
            ModeArg::Shiftnet => vec![TrainMode::ShiftNet],
            ModeArg::Both => vec![TrainMode::Regular, TrainMode::ShiftNet],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 20)]
    pub len: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
}

impl SynthArgs {
    fn params(&self, seed: u64) -> SynthParams {
        SynthParams {
            classes: self.classes,
            samples_per_class: self.per_class,
            context: self.channels,
            len: self.len,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Use the synthetic generator instead of a dataset file.
    #[arg(long, conflicts_with = "data")]
    pub synth: bool,
    /// Dataset CSV (`c0..,sample,label`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Resample every dataset sequence to this many frames.
    #[arg(long)]
    pub resample: Option<usize>,
    #[command(flatten)]
    pub synth_args: SynthArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 6)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory to write each trained model into (`cae-<mode>.json`).
    #[arg(long)]
    pub save_dir: Option<PathBuf>,
}

impl TrainArgs {
    fn dataset(&self) -> Result<LabeledDataset> {
        let data = match (&self.data, self.synth) {
            (Some(path), _) => read_dataset_file(path, self.resample)?,
            (None, true) => synth_dataset(&self.synth_args.params(self.seed))?,
            (None, false) => return Err(Error::InvalidInput("pass --synth or --data <path>".into())),
        };
        if data.observed_classes() < 2 {
            return Err(Error::InvalidInput("dataset needs at least two distinct classes".into()));
        }
        if data.time_len() < self.window {
            return Err(Error::InvalidInput(format!(
                "sequences have {} frames, fewer than the window {}",
                data.time_len(),
                self.window
            )));
        }
        Ok(data)
    }

    fn shape(&self) -> CaeShape {
        CaeShape {
            hidden: self.hidden,
            window: self.window,
            activation: Activation::Tanh,
        }
    }

    fn config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            seed: self.seed,
            mode,
        }
    }

    fn save(&self, model: &CaeModel, mode: TrainMode) -> Result<()> {
        if let Some(dir) = &self.save_dir {
            std::fs::create_dir_all(dir)?;
            ModelFile::from_cae(model).write(&dir.join(format!("cae-{}.json", mode.name())))?;
        }
        Ok(())
    }
}

/// Parse `a-b` (inclusive), `a`, or a comma list of either.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad range `{s}`: {e}")))
        };
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(Error::Parse(format!("empty range `{part}`")));
                }
                out.extend(lo..=hi);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("empty range `{s}`")));
    }
    Ok(out)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad list `{s}`: {e}")))
        })
        .collect()
}

fn provenance(seed: Option<u64>, argv: &[String]) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "# deepshift {} seed={} cmd={}",
        env!("CARGO_PKG_VERSION"),
        seed,
        argv.join(" ")
    )
}

fn open_out<'a>(out: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

/// Outcome of a streaming-vs-naive comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub steps: usize,
    pub layers: usize,
    pub frames_compared: u64,
    /// `(step, layer)` of the first mismatch, 1-based step.
    pub first_divergence: Option<(usize, usize)>,
}

/// Push `steps` seeded frames through a [`ShiftEngine`] and compare every
/// cached layer against a naive pass over the most recent frames.
pub fn verify_network(net: &NetworkSpec, seed: u64, steps: usize, retain: usize) -> Result<VerifyReport> {
    let mut engine = ShiftEngine::new(net.clone(), retain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // enough input history to reproduce every retained frame of every layer
    let history = retain + net.min_input_len() - 1;
    let c = net.c_in();
    let mut stream: Vec<f64> = Vec::with_capacity(steps.min(1 << 20) * c);
    let mut report = VerifyReport {
        steps,
        layers: net.depth(),
        frames_compared: 0,
        first_divergence: None,
    };
    for step in 1..=steps {
        let frame: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        engine.step(&frame)?;
        stream.extend_from_slice(&frame);
        let keep = history.min(step);
        if stream.len() > 2 * history * c {
            stream.drain(..stream.len() - keep * c);
        }
        let recent = Sequence::from_flat(c, stream[stream.len() - keep * c..].to_vec())?;
        let naive = forward_prefix(net, &recent, &mut OpCounter::new())?;
        for (l, cached) in engine.snapshot().iter().enumerate() {
            let expected = match naive.get(l) {
                Some(full) => full.tail(cached.len()),
                None => Sequence::empty(cached.context()),
            };
            report.frames_compared += cached.len() as u64;
            let same_bits = cached.len() == expected.len()
                && cached
                    .as_flat()
                    .iter()
                    .zip(expected.as_flat())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same_bits {
                report.first_divergence = Some((step, l));
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// Run the CLI on `argv` (including the program name).
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let words: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &words, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cmd: Command, argv: &[String], stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Verify {
            model,
            seed,
            steps,
            retain,
            out,
        } => {
            let file = ModelFile::read(&model)?;
            let report = verify_network(&file.network, seed, steps, retain)?;
            let mut w = open_out(&out, stdout)?;
            writeln!(w, "{}", provenance(Some(seed), argv))?;
            writeln!(w, "steps,layers,frames_compared,verified,divergence_step,divergence_layer")?;
            let (ds, dl) = report
                .first_divergence
                .map_or((String::new(), String::new()), |(s, l)| (s.to_string(), l.to_string()));
            writeln!(
                w,
                "{},{},{},{},{},{}",
                report.steps,
                report.layers,
                report.frames_compared,
                report.first_divergence.is_none(),
                ds,
                dl
            )?;
            w.flush()?;
            Ok(if report.first_divergence.is_none() {
                EXIT_OK
            } else {
                EXIT_MISMATCH
            })
        }
        Command::Bench { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = BenchConfig::from_toml(&text)?;
            let records = run_bench(&cfg)?;
            let mut w = open_out(&out, stdout)?;
            writeln!(w, "{}", provenance(Some(cfg.seed), argv))?;
            writeln!(w, "{}", BenchRecord::HEADER)?;
            for r in &records {
                writeln!(w, "{}", r.csv_row())?;
            }
            for c in crossovers(&records) {
                let at = c.frames.map_or_else(|| "none".to_string(), |f| f.to_string());
                writeln!(
                    w,
                    "# crossover n_layers={} window={} context={} frames={}",
                    c.n_layers, c.window, c.context, at
                )?;
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::Count { n, t, w: win, out } => {
            let (ns, ts, ws) = (parse_range(&n)?, parse_range(&t)?, parse_range(&win)?);
            let mut w = open_out(&out, stdout)?;
            writeln!(w, "{}", provenance(None, argv))?;
            writeln!(
                w,
                "n,t,w,series_A,closed_A,series_B,closed_B,ds,speedup,counter_A,counter_B,\
                 closed_A_matches,closed_B_matches,counter_A_matches,counter_B_matches"
            )?;
            let opt = |v: Option<String>| v.unwrap_or_default();
            for &n in &ns {
                for &t in &ts {
                    for &wv in &ws {
                        if n == 0 || t == 0 || wv == 0 {
                            return Err(Error::InvalidInput("count grid values must be positive".into()));
                        }
                        let r = reconcile(CostParams::new(n, t, wv))?;
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                            n,
                            t,
                            wv,
                            r.series_a,
                            r.closed_a,
                            opt(r.series_b.map(|v| v.to_string())),
                            r.closed_b,
                            r.deep_shifting,
                            opt(r.speedup.map(|v| v.to_string())),
                            r.counter_a,
                            opt(r.counter_b.map(|v| v.to_string())),
                            r.closed_a_matches(),
                            opt(r.closed_b_matches().map(|v| v.to_string())),
                            r.series_a_matches_counter(),
                            opt(r.series_b_matches_counter().map(|v| v.to_string())),
                        )?;
                    }
                }
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::Train(args) => {
            let data = args.dataset()?;
            let mut w = open_out(&args.out, stdout)?;
            writeln!(w, "{}", provenance(Some(args.seed), argv))?;
            writeln!(w, "mode,epoch,loss")?;
            for mode in args.mode.modes() {
                let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
                let shape = args.shape();
                let init = CaeModel::random(data.context(), shape.hidden, shape.window, shape.activation, &mut rng)?;
                let (model, report) = train(&init, data.samples(), &args.config(mode))?;
                writeln!(w, "{},0,{}", mode.name(), report.initial_loss)?;
                for (e, loss) in report.losses.iter().enumerate() {
                    writeln!(w, "{},{},{}", mode.name(), e + 1, loss)?;
                }
                args.save(&model, mode)?;
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::Classify {
            train: args,
            split,
            mlp_hidden,
            mlp_epochs,
            mlp_lr,
        } => {
            let data = args.dataset()?;
            let split = SplitSpec::parse(&split, args.seed)?;
            let mlp = MlpConfig {
                hidden: mlp_hidden,
                max_epochs: mlp_epochs,
                learning_rate: mlp_lr,
                ..MlpConfig::default()
            };
            let mut w = open_out(&args.out, stdout)?;
            writeln!(w, "{}", provenance(Some(args.seed), argv))?;
            writeln!(w, "mode,fold,test_error,initial_loss,final_loss")?;
            for mode in args.mode.modes() {
                let res = run_pipeline(&data, &args.shape(), &args.config(mode), &split, &mlp)?;
                let (l0, l1) = (res.training.initial_loss, res.training.final_loss());
                for (f, err) in res.classification.fold_errors.iter().enumerate() {
                    writeln!(w, "{},{},{},{},{}", mode.name(), f, err, l0, l1)?;
                }
                writeln!(
                    w,
                    "{},mean,{},{},{}",
                    mode.name(),
                    res.classification.mean_error(),
                    l0,
                    l1
                )?;
                debug_assert_eq!(encode_features(&res.model, &data.samples()[..1])?.len(), 1);
                args.save(&res.model, mode)?;
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::GenData { synth, seed, out } => {
            let data = synth_dataset(&synth.params(seed))?;
            let mut w = open_out(&out, stdout)?;
            writeln!(w, "{}", provenance(Some(seed), argv))?;
            write_dataset(&mut w, &data)?;
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::GenModel {
            context,
            channels,
            windows,
            scale,
            activation,
            seed,
            out,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = NetworkSpec::random(
                context,
                &parse_list(&channels)?,
                &parse_list(&windows)?,
                activation.into(),
                scale,
                &mut rng,
            )?;
            let mut w = open_out(&out, stdout)?;
            writeln!(w, "{}", ModelFile::new(net).to_json())?;
            w.flush()?;
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1-4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("3").unwrap(), vec![3]);
        assert_eq!(parse_range("1,5-6").unwrap(), vec![1, 5, 6]);
        assert!(parse_range("4-1").is_err());
        assert!(parse_range("x").is_err());
        assert!(parse_range("").is_err());
    }

    #[test]
    fn verify_small_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetworkSpec::random(2, &[3, 2], &[3, 4], Activation::Tanh, 0.5, &mut rng).unwrap();
        let r = verify_network(&net, 1, 60, 5).unwrap();
        assert_eq!(r.first_divergence, None);
        assert!(r.frames_compared > 0);
        let r = verify_network(&net, 1, 0, 5).unwrap();
        assert_eq!((r.first_divergence, r.frames_compared), (None, 0));
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["deepshift", "nope"], &mut out, &mut err), EXIT_ERROR);
        assert_eq!(run(["deepshift", "verify"], &mut out, &mut err), EXIT_ERROR);
    }
}
