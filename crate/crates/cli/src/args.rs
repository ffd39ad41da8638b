use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cbss", version, about = "Determined blind source separation with STFT consistency")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Separate a multichannel WAV file into one file per source.
    Separate(SeparateArgs),
    /// Mix source files with a seeded instantaneous or convolutive system.
    Mix(MixArgs),
    /// Score estimates against references with SDR/SIR/SAR.
    Eval(EvalArgs),
    /// Project perturbed spectrograms onto the consistent set and render them.
    DemoConsistency(DemoConsistencyArgs),
    /// Scramble source bins across channels and measure leakage after projection.
    DemoPermutation(DemoPermutationArgs),
    /// Write a deterministic speech-like test signal.
    SynthSpeech(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    IcaL1,
    IvaL21,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixKind {
    Instantaneous,
    Convolutive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanArg {
    Identity,
    Swap,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StftArgs {
    #[arg(long, default_value_t = 1024)]
    pub fft_size: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeparateArgs {
    /// Multichannel mixture (PCM16 or float32 WAV).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::IcaL1)]
    pub model: ModelArg,
    /// Penalty weight; defaults to the model's own default.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, conflicts_with = "plain")]
    pub consistent: bool,
    #[arg(long)]
    pub plain: bool,
    #[arg(long, default_value_t = 1.0)]
    pub mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu2: f64,
    #[arg(long, default_value_t = 1.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub stft: StftArgs,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub normalize_input: bool,
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MixArgs {
    /// Source files; their channels are stacked in order.
    #[arg(required = true)]
    pub sources: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MixKind::Convolutive)]
    pub kind: MixKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2048)]
    pub taps: usize,
    /// Reverberation time in seconds.
    #[arg(long, default_value_t = 0.13)]
    pub rt60: f64,
    #[arg(long, default_value_t = 10.0)]
    pub max_cond: f64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub reference: Vec<PathBuf>,
    #[arg(long)]
    pub mixture: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub estimate: Vec<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub filter_len: usize,
    /// Append one row per source to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DemoConsistencyArgs {
    /// Signal to perturb; the first channel is used. Defaults to a bundled speech sample.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub stft: StftArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DemoPermutationArgs {
    /// Source files; defaults to two bundled speech samples.
    pub sources: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlanArg::Random)]
    pub plan: PlanArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub stft: StftArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 3.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
}
