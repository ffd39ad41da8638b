//! Command-line front end: WAV I/O, spectrogram images, run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod image_out;
pub mod manifest;
pub mod wav;

pub use error::{CliError, CliResult};

use args::{Cli, Command};

/// Runs one parsed invocation and returns the files it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<std::path::PathBuf>> {
    match &cli.command {
        Command::Separate(a) => commands::run_separate(a),
        Command::Mix(a) => commands::run_mix(a),
        Command::Eval(a) => commands::run_eval(a),
        Command::DemoConsistency(a) => commands::run_demo_consistency(a),
        Command::DemoPermutation(a) => commands::run_demo_permutation(a),
        Command::SynthSpeech(a) => commands::run_synth(a),
    }
}
