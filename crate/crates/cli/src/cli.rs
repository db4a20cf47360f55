use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use preopnet::waveform::Target;

#[derive(Debug, Parser)]
#[command(name = "preopnet", version, about = "Pre-operative risk estimation from 12-lead ECGs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted waveform signal.
    Synth(SynthArgs),
    /// Train a model on a cohort manifest.
    Train(TrainArgs),
    /// Train one model per stem dilation × stride pair and keep the best.
    Grid(GridArgs),
    /// Score a split and write discrimination, threshold and reclassification reports.
    Eval(EvalArgs),
    /// Perturbation importance map for one ECG.
    Explain(ExplainArgs),
    /// Count forward-pass operations of an architecture.
    Flops(FlopsArgs),
    /// Time end-to-end single-ECG inference.
    Bench(BenchArgs),
    /// Serve predictions and explanations over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Death,
    Mace,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Death => Target::Death,
            TargetArg::Mace => Target::Mace,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskArg {
    Zero,
    Noise,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (manifest.json, truth.json, ecgs/).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthesis parameters as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub waveform_signal: Option<f64>,
    #[arg(long)]
    pub clinical_signal: Option<f64>,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct TrainOptions {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Architecture JSON; the canonical configuration when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training hyperparameters as JSON; flags below override it.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub threshold_percentile: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fuse age, sex and RCRI variables into the dense layer.
    #[arg(long)]
    pub clinical: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub opts: TrainOptions,
    /// Output directory (weights.ponw, history.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub opts: TrainOptions,
    /// Output directory (grid.json, grid.csv, weights.ponw of the winner).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
    pub dilations: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    pub strides: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, env = "PREOPNET_WEIGHTS")]
    pub weights: PathBuf,
    /// Output directory (metrics.json, metrics.txt, roc.csv, reclassification.json).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Outcome to evaluate; the model's training target when omitted.
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["ecg", "ecg_id"])))]
pub struct ExplainArgs {
    #[arg(long, env = "PREOPNET_WEIGHTS")]
    pub weights: PathBuf,
    /// ECG file (.csv or binary).
    #[arg(long)]
    pub ecg: Option<PathBuf>,
    /// ECG id looked up in --manifest.
    #[arg(long, requires = "manifest")]
    pub ecg_id: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Clinical variables as JSON (used with --ecg).
    #[arg(long)]
    pub clinical: Option<PathBuf>,
    /// Output JSON; a CSV with the same stem is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 0.005)]
    pub mask_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "zero")]
    pub mask: MaskArg,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Architecture JSON; the canonical configuration when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also print one line per layer.
    #[arg(long)]
    pub breakdown: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Weights to time; freshly initialised canonical weights when omitted.
    #[arg(long, env = "PREOPNET_WEIGHTS")]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the reports as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PREOPNET_WEIGHTS")]
    pub weights: PathBuf,
    #[arg(long, env = "PREOPNET_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Static client directory served under /ui/.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Threads available to each explain request.
    #[arg(long, default_value_t = 1)]
    pub explain_workers: usize,
}
