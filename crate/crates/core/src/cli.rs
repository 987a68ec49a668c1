//! Command-line front end: `segment`, `synth` and `eval`.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::detect::{self, BoundaryScores, PeakConfig, Segmentation};
use crate::error::{Error, Result};
use crate::ingest::{self, Normalization, SeriesMatrix, WindowConfig, WindowMatrix};
use crate::metrics::{self, BoundarySet};
use crate::net::Activation;
use crate::selfexpr::{DifferenceMatrix, DEFAULT_EPSILON};
use crate::synth::{self, SynthSpec, TruthFile};
use crate::train::{self, EpochLoss, Hyperparams, LossTerms, TrainReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TOLERANCE: usize = 2;

#[derive(Debug, Parser)]
#[command(name = "cosegment", version, about = "Concept segmentation of co-evolving time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a CSV series and write detected concept boundaries as JSON.
    Segment(SegmentArgs),
    /// Generate a synthetic series with planted regimes.
    Synth(SynthArgs),
    /// Score a segmentation result against a truth file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizeArg {
    None,
    Zscore,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Relu,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Time steps per window.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Defaults to half the window.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum, default_value = "zscore")]
    pub normalize: NormalizeArg,
    #[arg(long, default_value_t = 16)]
    pub latent: usize,
    /// Comma-separated hidden widths, none by default; the decoder mirrors them.
    #[arg(long, value_delimiter = ',', num_args = 0..=1)]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value = "tanh")]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 0.1)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda3: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long = "pretrain-epochs", default_value_t = 1000)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Let the coefficient matrix use its diagonal.
    #[arg(long = "allow-diagonal")]
    pub allow_diagonal: bool,
    #[arg(long = "peak-k", default_value_t = 1.5, allow_negative_numbers = true)]
    pub peak_k: f64,
    #[arg(long = "peak-min-distance", default_value_t = 2)]
    pub peak_min_distance: usize,
    /// Truth JSON from `synth`; adds metrics to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: usize,
    #[arg(long = "dump-theta")]
    pub dump_theta: Option<PathBuf>,
    #[arg(long = "dump-scores")]
    pub dump_scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Truth JSON; defaults to the CSV path with a `.truth.json` extension.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub concepts: usize,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    #[arg(long = "min-len", default_value_t = 120)]
    pub min_len: usize,
    #[arg(long = "max-len", default_value_t = 160)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub sines: usize,
    #[arg(long = "freq-min", default_value_t = 0.02)]
    pub freq_min: f64,
    #[arg(long = "freq-max", default_value_t = 0.2)]
    pub freq_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Result JSON written by `segment`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: usize,
}

/// Everything that determines a segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: String,
    pub window: WindowConfig,
    pub hyperparams: Hyperparams,
    pub peaks: PeakConfig,
    pub tolerance: usize,
}

impl RunConfig {
    /// Library defaults for a given input.
    pub fn new(input: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            window: WindowConfig::default(),
            hyperparams: Hyperparams::default(),
            peaks: PeakConfig::default(),
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ari: f64,
    pub tolerance: usize,
    pub num_predicted: usize,
    pub num_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub version: String,
    pub seed: u64,
    pub boundaries_window: Vec<usize>,
    pub boundaries_time: Vec<usize>,
    pub scores: Vec<f64>,
    pub loss_history: Vec<EpochLoss>,
    pub final_losses: LossTerms,
    pub converged: bool,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalMetrics>,
}

impl RunResult {
    /// Window start positions implied by the recorded configuration.
    pub fn window_starts(&self) -> Vec<usize> {
        (0..=self.scores.len())
            .map(|j| j * self.config.window.stride)
            .collect()
    }
}

/// Output of [`segment_series`].
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub windows: WindowMatrix,
    pub report: TrainReport,
    pub scores: BoundaryScores,
    pub segmentation: Segmentation,
}

/// Normalize, window, fit and detect.
pub fn segment_series(series: &SeriesMatrix, cfg: &RunConfig) -> Result<Pipeline> {
    let windows = ingest::prepare(series, &cfg.window)?;
    let report = train::fit(&windows, &cfg.hyperparams)?;
    let r = DifferenceMatrix::build(windows.count())?;
    let scores = detect::boundary_scores(&report.theta, &r)?;
    let segmentation = detect::map_to_time(
        &detect::find_peaks(&scores, &cfg.peaks),
        windows.window_starts(),
        windows.window_len(),
    );
    Ok(Pipeline {
        windows,
        report,
        scores,
        segmentation,
    })
}

/// Compare window-level boundaries against a time-level truth file.
pub fn evaluate_boundaries(
    boundaries_window: &[usize],
    window_starts: &[usize],
    window_len: usize,
    truth: &TruthFile,
    tolerance: usize,
) -> Result<EvalMetrics> {
    let n = window_starts.len();
    if let Some(&bad) = boundaries_window.iter().find(|&&b| b + 1 >= n) {
        return Err(Error::InvalidConfig(format!(
            "boundary {bad} out of range for {n} windows"
        )));
    }
    if let Some(&last) = window_starts.last() {
        if last + window_len > truth.labels.len() {
            return Err(Error::InvalidConfig(format!(
                "truth covers {} steps but windows reach {}",
                truth.labels.len(),
                last + window_len
            )));
        }
    }
    let predicted = BoundarySet::new(boundaries_window.to_vec());
    let truth_cuts = metrics::truth_window_boundaries(&truth.boundaries, window_starts, window_len);
    let f1 = metrics::boundary_f1(&predicted, &truth_cuts, tolerance);
    let seg = Segmentation::from_boundaries(predicted.indices().to_vec(), n);
    let ari = metrics::adjusted_rand_index(
        &metrics::segment_labels(&seg, n),
        &metrics::window_labels(&truth.labels, window_starts, window_len),
    )?;
    Ok(EvalMetrics {
        precision: f1.precision,
        recall: f1.recall,
        f1: f1.f1,
        ari,
        tolerance,
        num_predicted: predicted.len(),
        num_truth: truth_cuts.len(),
    })
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Treat the first line as a header if any of its cells is not a number.
fn sniff_header(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(first.split(',').any(|cell| cell.trim().parse::<f64>().is_err()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    std::fs::write(path, text).map_err(io_error(path))
}

fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_error(path))
}

fn write_scores_csv(path: &Path, y: &[f64]) -> Result<()> {
    let mut out = String::from("boundary,score\n");
    for (j, v) in y.iter().enumerate() {
        out.push_str(&format!("{j},{v:?}\n"));
    }
    std::fs::write(path, out).map_err(io_error(path))
}

fn run_config(args: &SegmentArgs) -> RunConfig {
    RunConfig {
        input: args.input.display().to_string(),
        window: WindowConfig {
            window_len: args.window,
            stride: args.stride.unwrap_or((args.window / 2).max(1)),
            normalize: match args.normalize {
                NormalizeArg::None => Normalization::None,
                NormalizeArg::Zscore => Normalization::ZscorePerChannel,
            },
        },
        hyperparams: Hyperparams {
            lambda1: args.lambda1,
            lambda2: args.lambda2,
            lambda3: args.lambda3,
            learning_rate: args.lr,
            epochs: args.epochs,
            pretrain_epochs: args.pretrain_epochs,
            seed: args.seed,
            latent_dim: args.latent,
            hidden: args.hidden.clone(),
            activation: match args.activation {
                ActivationArg::Tanh => Activation::Tanh,
                ActivationArg::Relu => Activation::Relu,
            },
            zero_diagonal: !args.allow_diagonal,
            epsilon: args.epsilon,
        },
        peaks: PeakConfig {
            min_distance: args.peak_min_distance,
            threshold_k: args.peak_k,
        },
        tolerance: args.tolerance,
    }
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<RunResult> {
    let cfg = run_config(args);
    if cfg.peaks.min_distance == 0 {
        return Err(Error::InvalidConfig("peak min distance must be at least 1".into()));
    }
    let truth = args.truth.as_deref().map(TruthFile::read).transpose()?;
    let series = ingest::load_csv(&args.input, sniff_header(&args.input)?)?;
    let run = segment_series(&series, &cfg)?;

    let metrics = truth
        .map(|t| {
            evaluate_boundaries(
                &run.segmentation.boundaries,
                run.windows.window_starts(),
                run.windows.window_len(),
                &t,
                cfg.tolerance,
            )
        })
        .transpose()?;

    let result = RunResult {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: cfg.hyperparams.seed,
        boundaries_window: run.segmentation.boundaries.clone(),
        boundaries_time: run.segmentation.time_boundaries.clone(),
        scores: run.scores.y.clone(),
        loss_history: run.report.loss_history.clone(),
        final_losses: run.report.final_losses,
        converged: run.report.converged,
        config: cfg,
        metrics,
    };
    write_json(&args.out, &result)?;
    if let Some(path) = &args.dump_theta {
        write_matrix_csv(path, run.report.theta.theta())?;
    }
    if let Some(path) = &args.dump_scores {
        write_scores_csv(path, &run.scores.y)?;
    }
    Ok(result)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<TruthFile> {
    let spec = SynthSpec {
        num_concepts: args.concepts,
        num_segments: args.segments,
        segment_len_range: [args.min_len, args.max_len],
        d: args.channels,
        sines_per_concept: args.sines,
        freq_range: [args.freq_min, args.freq_max],
        noise_std: args.noise,
        seed: args.seed,
    };
    let result = synth::generate(&spec)?;
    let truth = result.truth(&spec);
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truth.json"));
    ingest::write_csv(&result.series, &args.out)?;
    write_json(&truth_path, &truth)?;
    Ok(truth)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalMetrics> {
    let text = std::fs::read_to_string(&args.pred).map_err(io_error(&args.pred))?;
    let pred: RunResult = serde_json::from_str(&text).map_err(|e| {
        Error::InvalidConfig(format!("{} is not a segment result: {e}", args.pred.display()))
    })?;
    if pred.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported schema version {}",
            pred.schema_version
        )));
    }
    let truth = TruthFile::read(&args.truth)?;
    evaluate_boundaries(
        &pred.boundaries_window,
        &pred.window_starts(),
        pred.config.window.window_len,
        &truth,
        args.tolerance,
    )
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } => 2,
        _ => 1,
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Segment(a) => cmd_segment(a).map(|r| {
            eprintln!(
                "{} boundaries, final loss {:.6}",
                r.boundaries_window.len(),
                r.final_losses.total()
            );
        }),
        Command::Synth(a) => cmd_synth(a).map(|t| {
            eprintln!("{} steps, {} boundaries", t.labels.len(), t.boundaries.len());
        }),
        Command::Eval(a) => cmd_eval(a).map(|m| {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&m).expect("serializable"));
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
