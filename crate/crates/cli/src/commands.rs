use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use cbss::evaluation::{improvement, Evaluator};
use cbss::mixsim::{
    decay_from_rt60, dropout, make_exclusive, permutation_leakage, scramble_permutation,
    speech_like_sources, MixSpec, Mixing, PermutationPlan,
};
use cbss::pds::separate;
use cbss::source_models::ModelKind;
use cbss::stft::{consistency_residual, project_consistent, stft};
use cbss::{PenaltyModel, SolverConfig, Spectrogram, TimeSignal, Variant, WindowPair, WindowShape};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::image_out::save_spectrogram;
use crate::manifest::{sha256_hex, write_json, RunManifest};
use crate::wav::{read_many, read_wav, read_wav_bytes, stack, write_wav};

pub const OUT_DIR_ENV: &str = "CBSS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "cbss-out";

/// Largest relative change allowed between a first and a second projection.
pub const IDEMPOTENCE_TOL: f64 = 1e-10;

const SPEECH_A: &[u8] = include_bytes!("../../../fixtures/speech_a.wav");
const SPEECH_B: &[u8] = include_bytes!("../../../fixtures/speech_b.wav");

/// `--out-dir`, then `$CBSS_OUT_DIR`, then `./cbss-out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> CliResult<PathBuf> {
    let dir = match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
    Ok(dir)
}

fn tight(stft_args: &StftArgs) -> CliResult<WindowPair> {
    Ok(WindowPair::tight(WindowShape::Hann, stft_args.fft_size, stft_args.hop)?)
}

fn padded_spec(signal: &TimeSignal, win: &WindowPair) -> CliResult<Spectrogram> {
    Ok(stft(&signal.zero_padded(win.padded_len(signal.len())), win)?)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn run_separate(args: &SeparateArgs) -> CliResult<Vec<PathBuf>> {
    let mixture = read_wav(&args.input)?;
    if mixture.channels() < 2 {
        return Err(CliError::Mono(mixture.channels()));
    }
    let kind = match args.model {
        ModelArg::IcaL1 => ModelKind::LaplaceIca,
        ModelArg::IvaL21 => ModelKind::LaplaceIva,
    };
    let model = PenaltyModel::new(kind, args.lambda.unwrap_or(kind.default_lambda()))?;
    let cfg = SolverConfig {
        mu1: args.mu1,
        mu2: args.mu2,
        alpha: args.alpha,
        iters: args.iters,
        variant: if args.plain { Variant::Plain } else { Variant::Consistent },
        normalize_input: args.normalize_input,
        log_every: args.log_every,
    };
    cfg.validate()?;
    let win = tight(&args.stft)?;
    let out_dir = resolve_out_dir(args.out_dir.as_deref())?;
    let result = separate(&mixture, &model, &cfg, &win)?;

    let mut outputs = Vec::new();
    for m in 0..result.sources.channels() {
        let path = out_dir.join(format!("source_{}.wav", m + 1));
        let single = TimeSignal::from_channels(&[result.sources.channel(m)], mixture.sample_rate)?;
        write_wav(&path, &single)?;
        outputs.push(path);
    }
    let diag = out_dir.join("diagnostics.csv");
    write_text(&diag, &result.diagnostics.to_csv())?;
    outputs.push(diag);
    RunManifest::new("separate", args, None)
        .with_inputs(std::slice::from_ref(&args.input))?
        .finish(&out_dir, &outputs)?;
    Ok(outputs)
}

fn sample_checksum(samples: &[f64]) -> String {
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

pub fn run_mix(args: &MixArgs) -> CliResult<Vec<PathBuf>> {
    let sources = read_many(&args.sources)?;
    let m = sources.channels();
    if m < 2 {
        return Err(CliError::Mono(m));
    }
    let (spec, system) = match args.kind {
        MixKind::Instantaneous => {
            let spec = MixSpec::random_instantaneous(args.seed, m, args.max_cond);
            let Mixing::Instantaneous(a) = &spec.mixing else { unreachable!() };
            let rows: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
            (spec.clone(), json!({ "matrix": rows }))
        }
        MixKind::Convolutive => {
            let decay = decay_from_rt60(args.rt60, sources.sample_rate);
            let spec = MixSpec::random_convolutive(args.seed, m, args.taps, decay)?;
            let Mixing::Convolutive(rirs) = &spec.mixing else { unreachable!() };
            let sums: Vec<Vec<String>> =
                rirs.iter().map(|mic| mic.iter().map(|h| sample_checksum(h)).collect()).collect();
            (spec.clone(), json!({ "taps": args.taps, "rt60": args.rt60, "decay": decay, "rir_sha256": sums }))
        }
    };
    let mixture = spec.apply(&sources)?;
    let out_dir = resolve_out_dir(args.out_dir.as_deref())?;
    let wav = out_dir.join("mixture.wav");
    write_wav(&wav, &mixture)?;
    let sidecar = out_dir.join("mixture.json");
    write_json(
        &sidecar,
        &json!({
            "kind": args.kind,
            "seed": args.seed,
            "channels": m,
            "sample_rate": mixture.sample_rate,
            "samples": mixture.len(),
            "system": system,
        }),
    )?;
    let outputs = vec![wav, sidecar];
    RunManifest::new("mix", args, Some(args.seed))
        .with_inputs(&args.sources)?
        .finish(&out_dir, &outputs)?;
    Ok(outputs)
}

fn rows(signal: &TimeSignal) -> Vec<Vec<f64>> {
    (0..signal.channels()).map(|c| signal.channel(c)).collect()
}

pub fn run_eval(args: &EvalArgs) -> CliResult<Vec<PathBuf>> {
    let references = read_many(&args.reference)?;
    let estimates = read_many(&args.estimate)?;
    let mixture = read_wav(&args.mixture)?;
    let m = references.channels();
    if estimates.channels() != m || mixture.channels() != m {
        return Err(CliError::Shape(format!(
            "{m} reference channel(s), {} estimate channel(s), {} mixture channel(s)",
            estimates.channels(),
            mixture.channels()
        )));
    }
    if estimates.len() != references.len() || mixture.len() != references.len() {
        return Err(CliError::Shape("references, estimates and mixture differ in length".into()));
    }
    let evaluator = Evaluator::new(&rows(&references), args.filter_len)?;
    let mut report = evaluator.evaluate(&rows(&estimates))?;
    let baseline = evaluator.evaluate(&rows(&mixture))?;
    report.improvements = improvement(&report, &baseline)?.improvements;

    let out_dir = resolve_out_dir(args.out_dir.as_deref())?;
    let path = out_dir.join("report.json");
    write_json(&path, &json!({ "filter_len": args.filter_len, "estimate": report, "mixture": baseline }))?;
    if let Some(csv) = &args.csv {
        append_csv(csv, &report)?;
    }
    let mut inputs = args.reference.clone();
    inputs.push(args.mixture.clone());
    inputs.extend(args.estimate.iter().cloned());
    let outputs = vec![path];
    RunManifest::new("eval", args, None).with_inputs(&inputs)?.finish(&out_dir, &outputs)?;
    Ok(outputs)
}

pub const CSV_HEADER: &str =
    "reference,estimate,sdr_db,sir_db,sar_db,sdr_improvement_db,sir_improvement_db,sar_improvement_db";

fn append_csv(path: &Path, report: &cbss::MetricsReport) -> CliResult<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::output(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(CSV_HEADER);
        text.push('\n');
    }
    for (i, s) in report.sources.iter().enumerate() {
        let imp = report.improvements.as_ref().map(|v| v[i]);
        let (di, ii, ai) = imp.map_or((f64::NAN, f64::NAN, f64::NAN), |d| (d.sdr_db, d.sir_db, d.sar_db));
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.reference, s.estimate, s.sdr_db, s.sir_db, s.sar_db, di, ii, ai
        ));
    }
    file.write_all(text.as_bytes()).map_err(|e| CliError::output(path, e))
}

/// The bundled speech-like fixtures, one per channel.
pub fn demo_sources(count: usize) -> CliResult<TimeSignal> {
    let signals = [("speech_a.wav", SPEECH_A), ("speech_b.wav", SPEECH_B)]
        .iter()
        .take(count)
        .map(|(name, bytes)| read_wav_bytes(bytes, Path::new(name)))
        .collect::<CliResult<Vec<_>>>()?;
    stack(&signals)
}

/// Unit pulses on a sparse lattice of the grid of `like`.
pub fn pulse_train(like: &Spectrogram) -> Spectrogram {
    let mut out = like.zeros_like();
    let (channels, frames, bins) = out.data.dim();
    for m in 0..channels {
        for t in (frames.min(4) / 2..frames).step_by(8) {
            for f in (bins.min(64) / 2..bins).step_by(64) {
                out.data[[m, t, f]] = num_complex::Complex64::new(1.0, 0.0);
            }
        }
    }
    out
}

pub fn run_demo_consistency(args: &DemoConsistencyArgs) -> CliResult<Vec<PathBuf>> {
    let (signal, inputs) = match &args.input {
        Some(p) => {
            let s = read_wav(p)?;
            (TimeSignal::from_channels(&[s.channel(0)], s.sample_rate)?, vec![p.clone()])
        }
        None => (demo_sources(1)?, Vec::new()),
    };
    let win = tight(&args.stft)?;
    let speech = padded_spec(&signal, &win)?;
    let cases = [
        ("speech", speech.clone()),
        ("pulses", pulse_train(&speech)),
        ("dropout", dropout(&speech, args.dropout, args.seed)?),
    ];
    let out_dir = resolve_out_dir(args.out_dir.as_deref())?;
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, spec) in &cases {
        let once = project_consistent(spec, &win)?;
        let twice = project_consistent(&once, &win)?;
        let mut diff = twice.clone();
        diff.data -= &once.data;
        let scale = once.norm();
        let change = if scale > 0.0 { diff.norm() / scale } else { diff.norm() };
        worst = worst.max(change);
        for (stage, s) in [("original", spec), ("projected", &once), ("reprojected", &twice)] {
            let path = out_dir.join(format!("{name}_{stage}.png"));
            save_spectrogram(&path, s, 0)?;
            outputs.push(path);
        }
        rows.push(json!({
            "name": name,
            "residual_before": consistency_residual(spec, &win)?,
            "residual_after": consistency_residual(&once, &win)?,
            "reprojection_change": change,
        }));
    }
    let ok = worst <= IDEMPOTENCE_TOL;
    let report = out_dir.join("report.json");
    write_json(
        &report,
        &json!({
            "fft_size": args.stft.fft_size,
            "hop": args.stft.hop,
            "dropout": args.dropout,
            "seed": args.seed,
            "tolerance": IDEMPOTENCE_TOL,
            "idempotent": ok,
            "cases": rows,
        }),
    )?;
    outputs.push(report);
    RunManifest::new("demo-consistency", args, Some(args.seed))
        .with_inputs(&inputs)?
        .finish(&out_dir, &outputs)?;
    if !ok {
        return Err(CliError::Check(format!("second projection changed the result by {worst:e}")));
    }
    Ok(outputs)
}

pub fn run_demo_permutation(args: &DemoPermutationArgs) -> CliResult<Vec<PathBuf>> {
    let sources = if args.sources.is_empty() {
        demo_sources(2)?
    } else {
        let signals = args.sources.iter().map(|p| read_wav(p)).collect::<CliResult<Vec<_>>>()?;
        stack(&signals)?
    };
    let m = sources.channels();
    if m < 2 {
        return Err(CliError::Mono(m));
    }
    let win = tight(&args.stft)?;
    let exclusive = make_exclusive(&padded_spec(&sources, &win)?);
    let bins = exclusive.bins();
    let plan = match args.plan {
        PlanArg::Identity => PermutationPlan::identity(m, bins),
        PlanArg::Swap => {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.swap(0, 1);
            let mut plan = PermutationPlan::identity(m, bins);
            for f in (1..bins).step_by(2) {
                plan.perms[f] = perm.clone();
            }
            plan
        }
        PlanArg::Random => PermutationPlan::random(m, bins, args.seed),
    };
    let scrambled = scramble_permutation(&exclusive, &plan)?;
    let projected = project_consistent(&scrambled, &win)?;
    let leakage = permutation_leakage(&exclusive, &plan, &win)?;

    let out_dir = resolve_out_dir(args.out_dir.as_deref())?;
    let mut outputs = Vec::new();
    for ch in 0..m {
        for (stage, s) in [("exclusive", &exclusive), ("scrambled", &scrambled), ("projected", &projected)] {
            let path = out_dir.join(format!("{stage}_{}.png", ch + 1));
            save_spectrogram(&path, s, ch)?;
            outputs.push(path);
        }
    }
    let report = out_dir.join("report.json");
    write_json(
        &report,
        &json!({
            "plan": args.plan,
            "seed": args.seed,
            "sources": m,
            "assignment": leakage.assignment,
            "energy_before": leakage.energy_before,
            "energy_after": leakage.energy,
            "leakage_before": leakage.leakage_before,
            "leakage_after": leakage.leakage_fraction,
        }),
    )?;
    outputs.push(report);
    RunManifest::new("demo-permutation", args, Some(args.seed))
        .with_inputs(&args.sources)?
        .finish(&out_dir, &outputs)?;
    Ok(outputs)
}

pub fn run_synth(args: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    if args.channels == 0 || !(args.duration > 0.0) {
        return Err(CliError::Shape("need at least one channel and a positive duration".into()));
    }
    let len = (args.duration * args.sample_rate as f64).round() as usize;
    let signal = speech_like_sources(args.seed, args.channels, len, args.sample_rate);
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    write_wav(&args.output, &signal)?;
    Ok(vec![args.output.clone()])
}
