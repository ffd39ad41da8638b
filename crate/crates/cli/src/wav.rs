//! WAV input and output.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use cbss::TimeSignal;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{CliError, CliResult};

fn decode<R: Read + Seek>(reader: WavReader<R>, path: &Path) -> CliResult<TimeSignal> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let codec = |detail: String| CliError::Codec { path: path.to_path_buf(), detail };
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| codec(e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| codec(e.to_string()))?,
        (format, bits) => return Err(codec(format!("{bits}-bit {format:?} samples"))),
    };
    if channels == 0 || interleaved.len() % channels != 0 {
        return Err(codec("truncated sample frame".into()));
    }
    let frames = interleaved.len() / channels;
    let samples = Array2::from_shape_fn((channels, frames), |(c, n)| interleaved[n * channels + c]);
    let signal = TimeSignal::new(samples, spec.sample_rate);
    if !signal.is_finite() {
        return Err(codec("non-finite samples".into()));
    }
    Ok(signal)
}

fn open_error(path: &Path, err: hound::Error) -> CliError {
    match err {
        hound::Error::IoError(e) => CliError::Unreadable { path: path.to_path_buf(), reason: e.to_string() },
        other => CliError::Codec { path: path.to_path_buf(), detail: other.to_string() },
    }
}

/// Reads a PCM16 or float32 WAV file; PCM16 maps to `[-1, 1)`.
pub fn read_wav(path: &Path) -> CliResult<TimeSignal> {
    let reader = WavReader::open(path).map_err(|e| open_error(path, e))?;
    decode(reader, path)
}

pub fn read_wav_bytes(bytes: &[u8], label: &Path) -> CliResult<TimeSignal> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|e| open_error(label, e))?;
    decode(reader, label)
}

/// Writes all channels as interleaved 32-bit float samples.
pub fn write_wav(path: &Path, signal: &TimeSignal) -> CliResult<()> {
    let spec = WavSpec {
        channels: signal.channels() as u16,
        sample_rate: signal.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| CliError::output(path, e))?;
    for n in 0..signal.len() {
        for c in 0..signal.channels() {
            writer
                .write_sample(signal.samples[[c, n]] as f32)
                .map_err(|e| CliError::output(path, e))?;
        }
    }
    writer.finalize().map_err(|e| CliError::output(path, e))
}

/// Concatenates the channels of several files, which must agree in length and rate.
pub fn read_many(paths: &[std::path::PathBuf]) -> CliResult<TimeSignal> {
    let signals = paths.iter().map(|p| read_wav(p)).collect::<CliResult<Vec<_>>>()?;
    stack(&signals)
}

pub fn stack(signals: &[TimeSignal]) -> CliResult<TimeSignal> {
    let first = signals.first().ok_or_else(|| CliError::Shape("no input signals".into()))?;
    if signals.iter().any(|s| s.len() != first.len()) {
        return Err(CliError::Shape("input files differ in length".into()));
    }
    if signals.iter().any(|s| s.sample_rate != first.sample_rate) {
        return Err(CliError::Shape("input files differ in sample rate".into()));
    }
    let rows: Vec<Vec<f64>> = signals.iter().flat_map(|s| (0..s.channels()).map(|c| s.channel(c))).collect();
    Ok(TimeSignal::from_channels(&rows, first.sample_rate)?)
}
