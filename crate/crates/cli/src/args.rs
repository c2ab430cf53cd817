use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Task-vector arithmetic for checkpoint-level synthetic-to-real adaptation.
///
/// Every subcommand prints one JSON document on stdout. Logs and error
/// reports go to stderr. Exit codes: 0 success, 1 validation error, 2 I/O
/// error, 3 evaluator failure, 64 usage error.
#[derive(Debug, Parser)]
#[command(name = "synvec", version)]
pub struct Cli {
    /// Log verbosity on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,

    /// Worker threads for internal parallelism (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Base seed for randomized operations [default: 0, or the toy config's seed].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Task vector = real checkpoint - synthetic checkpoint.
    Diff(DiffArgs),
    /// Add lambda times the (mean) task vector to a model, streaming from disk.
    Apply(ApplyArgs),
    /// Average several task vectors into one.
    Ensemble(EnsembleArgs),
    /// Cosine similarity between task vectors.
    Cosine(CosineArgs),
    /// Describe a checkpoint or task vector file.
    Inspect(InspectArgs),
    /// Evaluate a model over a grid of scaling factors.
    Sweep(SweepArgs),
    /// Evaluate ensembles of increasing numbers of source domains.
    Ablate(AblateArgs),
    /// Run the toy adaptation experiment.
    ToyRun(ToyArgs),
    /// Write CSV tables, SVG figures and a manifest.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Checkpoint fine-tuned on real data.
    pub real: PathBuf,
    /// Checkpoint fine-tuned on synthetic data.
    pub syn: PathBuf,
    /// Output task vector file.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Source domain recorded in the vector's provenance.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub real_label: Option<String>,
    #[arg(long)]
    pub syn_label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    /// Target model checkpoint.
    pub model: PathBuf,
    /// One or more task vectors; several are averaged.
    #[arg(required = true)]
    pub taus: Vec<PathBuf>,
    /// Scaling factor.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Pass NaN/inf model values through instead of failing.
    #[arg(long)]
    pub allow_non_finite: bool,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(required = true)]
    pub taus: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Global,
    PerTensor,
}

#[derive(Debug, Args)]
pub struct CosineArgs {
    /// Two or more task vectors.
    #[arg(num_args = 2.., required = true)]
    pub taus: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = GranularityArg::Global)]
    pub granularity: GranularityArg,
    /// Labels, comma-separated (default: recorded source domain or file stem).
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Prefix prepended to every label, e.g. `B_`.
    #[arg(long, default_value = "")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Also hash tensor contents (reads all data).
    #[arg(long)]
    pub content_hash: bool,
    /// Also compute per-tensor norm statistics (reads all data).
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Explicit lambda values, comma-separated and ascending.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "grid_range")]
    pub grid: Vec<f64>,
    /// Evenly spaced grid `START:STOP:STEP` (inclusive). Default `0:1:0.1`.
    #[arg(long)]
    pub grid_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluator command; `{checkpoint}` and `{lambda}` are substituted.
    /// Must print `{"wer": <number>}` and exit 0.
    #[arg(long)]
    pub evaluator: String,
    /// Directory for per-point checkpoints and evaluator working dirs.
    #[arg(long)]
    pub workdir: PathBuf,
    #[arg(long)]
    pub keep_checkpoints: bool,
    /// Concurrent evaluator processes.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Also write the result JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the CSV export here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Zero wall-clock timings so repeated runs serialize identically.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub model: PathBuf,
    #[arg(required = true)]
    pub taus: Vec<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Prefix,
    Random,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    pub model: PathBuf,
    /// Task vectors in the order used by the prefix policy.
    #[arg(required = true)]
    pub taus: Vec<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Prefix)]
    pub policy: PolicyArg,
    /// Seeds for the random policy (default: `--num-seeds` values from `--seed`).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    pub num_seeds: usize,
    /// Domain counts to evaluate (default: 1..=number of vectors).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyMode {
    /// One pooled task vector.
    Single,
    /// One vector per source domain, averaged.
    Ensemble,
    /// Best error for k = 1..=source-domains.
    Curve,
    /// Intra- vs inter-family cosine similarity.
    Similarity,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long, value_enum, default_value_t = ToyMode::Single)]
    pub mode: ToyMode,
    /// JSON protocol config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub class_mean_scale: Option<f64>,
    /// Synthetic channel bias scale.
    #[arg(long)]
    pub bias_scale: Option<f64>,
    /// Synthetic channel multiplicative scale.
    #[arg(long)]
    pub channel_scale: Option<f64>,
    /// Extra noise stddev of real data.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Set bias, channel and extra-noise scales to zero.
    #[arg(long)]
    pub zero_gap: bool,
    #[arg(long)]
    pub base_noise_std: Option<f64>,
    #[arg(long)]
    pub domain_offset_scale: Option<f64>,
    #[arg(long)]
    pub source_domains: Option<usize>,
    #[arg(long)]
    pub family: Option<u64>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub eval_samples_per_class: Option<usize>,
    /// Number of seeds, starting at `--seed`.
    #[arg(long)]
    pub num_seeds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2_penalty: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Synthetic families for `--mode similarity` as `PREFIX:ID`, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "A_:0,B_:1")]
    pub families: Vec<String>,
    /// Round-trip every model through checkpoint files in this directory.
    #[arg(long)]
    pub persist_dir: Option<PathBuf>,
    /// Write the per-seed CSV here (single and ensemble modes).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write a similarity report bundle under this directory (similarity mode).
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportOut {
    /// Root directory; files go to `<out-dir>/<name>/`.
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Heatmap of cosine similarities.
    Similarity {
        #[arg(num_args = 2.., required = true)]
        taus: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value = "")]
        prefix: String,
        #[arg(long, value_enum, default_value_t = GranularityArg::Global)]
        granularity: GranularityArg,
        #[command(flatten)]
        out: ReportOut,
    },
    /// WER-vs-lambda chart from sweep result JSON files.
    Sweep {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Series labels, e.g. `Whisper+BARK` (default: file stems).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Relative-WER table from two JSON objects mapping domain to WER.
    Table {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        adapted: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// WER-vs-domain-count chart from an ablation result JSON file.
    Ablation {
        result: PathBuf,
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        out: ReportOut,
    },
}
