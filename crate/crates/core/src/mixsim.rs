//! Seeded mixture simulation and spectrogram perturbations.
//!
//! Every random draw goes through [`rng_stream`], which derives an
//! independent ChaCha stream from a user seed and a stream name, so the
//! stages of a pipeline (mixing matrix, room responses, permutations,
//! dropout, synthetic sources) never share random numbers.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use realfft::RealFftPlanner;

use crate::error::{BssError, Result};
use crate::stft::{project_consistent, Spectrogram, TimeSignal, WindowPair};

pub const STREAM_MIXING: &str = "mixing-matrix";
pub const STREAM_RIR: &str = "rir";
pub const STREAM_PERMUTATION: &str = "permutation";
pub const STREAM_DROPOUT: &str = "dropout";
pub const STREAM_SOURCES: &str = "sources";

/// Independent random stream for `(seed, name)`.
pub fn rng_stream(seed: u64, name: &str) -> ChaCha20Rng {
    // FNV-1a
    let id = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn cond_number(a: &Array2<f64>) -> f64 {
    let (r, c) = a.dim();
    let sv = DMatrix::from_fn(r, c, |i, j| a[[i, j]]).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Gaussian `m x m` matrix, redrawn until its condition number is at most `max_cond`.
pub fn random_mixing_matrix(seed: u64, m: usize, max_cond: f64) -> Array2<f64> {
    let mut rng = rng_stream(seed, STREAM_MIXING);
    loop {
        let a = Array2::from_shape_simple_fn((m, m), || rng.sample::<f64, _>(StandardNormal));
        if cond_number(&a) <= max_cond {
            return a;
        }
    }
}

/// `x = A s` sample by sample.
pub fn mix_instantaneous(sources: &TimeSignal, a: &Array2<f64>) -> Result<TimeSignal> {
    let (rows, cols) = a.dim();
    if rows != cols || cols != sources.channels() {
        return Err(BssError::Dimension(format!(
            "mixing matrix is {rows}x{cols}, sources have {} channels",
            sources.channels()
        )));
    }
    if !cond_number(a).is_finite() {
        return Err(BssError::Singular("mixing matrix".into()));
    }
    Ok(TimeSignal::new(a.dot(&sources.samples), sources.sample_rate))
}

/// Envelope decay constant (in samples) giving a 60 dB amplitude drop after `rt60` seconds.
pub fn decay_from_rt60(rt60: f64, sample_rate: u32) -> f64 {
    rt60 * sample_rate as f64 / 1000f64.ln()
}

fn rir_from_rng(rng: &mut ChaCha20Rng, taps: usize, decay: f64) -> Vec<f64> {
    let mut r: Vec<f64> = (0..taps)
        .map(|k| rng.sample::<f64, _>(StandardNormal) * (-(k as f64) / decay).exp())
        .collect();
    r[0] = r[0].abs();
    let energy = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if energy > 0.0 {
        r.iter_mut().for_each(|v| *v /= energy);
    } else {
        r[0] = 1.0;
    }
    r
}

/// Exponentially decaying Gaussian noise with a positive first tap and unit energy.
pub fn synth_rir(seed: u64, taps: usize, decay: f64) -> Result<Vec<f64>> {
    if taps == 0 || !(decay > 0.0) {
        return Err(BssError::Config(format!(
            "room response needs taps >= 1 and decay > 0, got {taps} and {decay}"
        )));
    }
    Ok(rir_from_rng(&mut rng_stream(seed, STREAM_RIR), taps, decay))
}

/// `m x m` grid of responses drawn from one seeded stream; `grid[mic][src]`.
pub fn synth_rir_grid(seed: u64, m: usize, taps: usize, decay: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    if taps == 0 || !(decay > 0.0) {
        return Err(BssError::Config(format!(
            "room response needs taps >= 1 and decay > 0, got {taps} and {decay}"
        )));
    }
    let mut rng = rng_stream(seed, STREAM_RIR);
    Ok((0..m)
        .map(|_| (0..m).map(|_| rir_from_rng(&mut rng, taps, decay)).collect())
        .collect())
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |sig: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..sig.len()].copy_from_slice(sig);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("buffer sizes match plan");
        out
    };
    let xs = spectrum(x);
    let hs = spectrum(h);
    let mut prod: Vec<Complex64> = xs.iter().zip(&hs).map(|(a, b)| a * b).collect();
    let last = prod.len() - 1;
    prod[0].im = 0.0;
    prod[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut prod, &mut out).expect("buffer sizes match plan");
    out.truncate(x.len());
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}

/// `x_m = sum_n rir[m][n] * s_n`, truncated to the source length.
pub fn mix_convolutive(sources: &TimeSignal, rirs: &[Vec<Vec<f64>>]) -> Result<TimeSignal> {
    let n_src = sources.channels();
    if rirs.is_empty() || rirs.iter().any(|row| row.len() != n_src) {
        return Err(BssError::Dimension(format!(
            "room response grid does not match {n_src} sources"
        )));
    }
    let len = sources.len();
    let mut out = Array2::zeros((rirs.len(), len));
    for (m, row) in rirs.iter().enumerate() {
        for (n, h) in row.iter().enumerate() {
            let src = sources.channel(n);
            let y = convolve_truncated(&src, h);
            out.row_mut(m)
                .iter_mut()
                .zip(y)
                .for_each(|(o, v)| *o += v);
        }
    }
    Ok(TimeSignal::new(out, sources.sample_rate))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mixing {
    Instantaneous(Array2<f64>),
    /// `rirs[mic][src]`
    Convolutive(Vec<Vec<Vec<f64>>>),
}

/// A reproducible mixing system.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub seed: u64,
    pub mixing: Mixing,
}

impl MixSpec {
    pub fn random_instantaneous(seed: u64, m: usize, max_cond: f64) -> Self {
        MixSpec { seed, mixing: Mixing::Instantaneous(random_mixing_matrix(seed, m, max_cond)) }
    }

    pub fn random_convolutive(seed: u64, m: usize, taps: usize, decay: f64) -> Result<Self> {
        Ok(MixSpec { seed, mixing: Mixing::Convolutive(synth_rir_grid(seed, m, taps, decay)?) })
    }

    pub fn channels(&self) -> usize {
        match &self.mixing {
            Mixing::Instantaneous(a) => a.nrows(),
            Mixing::Convolutive(r) => r.len(),
        }
    }

    pub fn apply(&self, sources: &TimeSignal) -> Result<TimeSignal> {
        match &self.mixing {
            Mixing::Instantaneous(a) => mix_instantaneous(sources, a),
            Mixing::Convolutive(r) => mix_convolutive(sources, r),
        }
    }
}

/// Per-bin channel permutations. Output channel `m` of bin `f` takes input
/// channel `perms[f][m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub perms: Vec<Vec<usize>>,
    pub seed: Option<u64>,
}

impl PermutationPlan {
    pub fn identity(channels: usize, bins: usize) -> Self {
        PermutationPlan { perms: vec![(0..channels).collect(); bins], seed: None }
    }

    /// The same permutation in every bin.
    pub fn uniform(perm: Vec<usize>, bins: usize) -> Result<Self> {
        check_bijection(&perm)?;
        Ok(PermutationPlan { perms: vec![perm; bins], seed: None })
    }

    pub fn random(channels: usize, bins: usize, seed: u64) -> Self {
        let mut rng = rng_stream(seed, STREAM_PERMUTATION);
        let perms = (0..bins)
            .map(|_| {
                let mut p: Vec<usize> = (0..channels).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        PermutationPlan { perms, seed: Some(seed) }
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (m, &src) in p.iter().enumerate() {
                    inv[src] = m;
                }
                inv
            })
            .collect();
        PermutationPlan { perms, seed: self.seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.perms.iter().try_for_each(|p| check_bijection(p))
    }
}

fn check_bijection(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return Err(BssError::Config(format!("{p:?} is not a permutation")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Permutes channel contents independently in each frequency bin.
pub fn scramble_permutation(spec: &Spectrogram, plan: &PermutationPlan) -> Result<Spectrogram> {
    plan.validate()?;
    if plan.perms.len() != spec.bins() || plan.perms.iter().any(|p| p.len() != spec.channels()) {
        return Err(BssError::Dimension(format!(
            "permutation plan ({} bins) does not match spectrogram {:?}",
            plan.perms.len(),
            spec.data.dim()
        )));
    }
    let mut out = spec.zeros_like();
    for (f, perm) in plan.perms.iter().enumerate() {
        for (m, &src) in perm.iter().enumerate() {
            let col = spec.data.slice(ndarray::s![src, .., f]);
            out.data.slice_mut(ndarray::s![m, .., f]).assign(&col);
        }
    }
    Ok(out)
}

/// Zeroes each coefficient independently with probability `rate`.
pub fn dropout(spec: &Spectrogram, rate: f64, seed: u64) -> Result<Spectrogram> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(BssError::Config(format!("dropout rate must lie in [0, 1], got {rate}")));
    }
    let mut rng = rng_stream(seed, STREAM_DROPOUT);
    let mut out = spec.clone();
    for v in out.data.iter_mut() {
        if rng.random::<f64>() < rate {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// Keeps, in every time-frequency bin, only the channel with the largest
/// magnitude, so each bin belongs to exactly one channel.
pub fn make_exclusive(spec: &Spectrogram) -> Spectrogram {
    let mut out = spec.zeros_like();
    let (channels, frames, bins) = spec.data.dim();
    for t in 0..frames {
        for f in 0..bins {
            let winner = (0..channels)
                .max_by(|&a, &b| {
                    spec.data[[a, t, f]]
                        .norm_sqr()
                        .total_cmp(&spec.data[[b, t, f]].norm_sqr())
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            out.data[[winner, t, f]] = spec.data[[winner, t, f]];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    /// `energy[i][j]`: energy of source `j` in output `i` after projection.
    pub energy: Vec<Vec<f64>>,
    /// Same split of the scrambled outputs before projection.
    pub energy_before: Vec<Vec<f64>>,
    /// Output `i` is attributed to source `assignment[i]`.
    pub assignment: Vec<usize>,
    /// Share of the total energy that ends up in outputs not attributed to its source.
    pub leakage_fraction: f64,
    /// The same share before projection, under the same assignment.
    pub leakage_before: f64,
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Scrambles per-bin exclusive source spectrograms with `plan`, projects each
/// output onto the consistent subspace and measures how much of every
/// source's energy ends up in outputs attributed to other sources.
pub fn permutation_leakage(
    sources: &Spectrogram,
    plan: &PermutationPlan,
    win: &WindowPair,
) -> Result<LeakageReport> {
    let scrambled = scramble_permutation(sources, plan)?;
    let m = sources.channels();
    let mut energy = vec![vec![0.0; m]; m];
    let mut energy_before = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut part = Spectrogram::zeros(1, sources.fft_size, sources.hop, sources.signal_len);
            let mut any = false;
            for (f, perm) in plan.perms.iter().enumerate() {
                if perm[i] == j {
                    any = true;
                    part.data
                        .slice_mut(ndarray::s![0, .., f])
                        .assign(&scrambled.data.slice(ndarray::s![i, .., f]));
                }
            }
            if any {
                energy_before[i][j] = part.weighted_norm().powi(2);
                energy[i][j] = project_consistent(&part, win)?.weighted_norm().powi(2);
            }
        }
    }
    let share_outside = |e: &[Vec<f64>], assignment: &[usize]| {
        let total: f64 = e.iter().flatten().sum();
        let own: f64 = assignment.iter().enumerate().map(|(i, &j)| e[i][j]).sum();
        if total > 0.0 {
            (total - own).max(0.0) / total
        } else {
            0.0
        }
    };
    let assignment = permutations(m)
        .into_iter()
        .max_by(|a, b| {
            let own = |p: &Vec<usize>| p.iter().enumerate().map(|(i, &j)| energy[i][j]).sum::<f64>();
            own(a).total_cmp(&own(b))
        })
        .unwrap_or_default();
    let leakage_fraction = share_outside(&energy, &assignment);
    let leakage_before = share_outside(&energy_before, &assignment);
    Ok(LeakageReport { energy, energy_before, assignment, leakage_fraction, leakage_before })
}

/// Deterministic speech-like test signal: voiced syllables with a drifting
/// pitch and random formants, short noise bursts, and pauses.
pub fn speech_like(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let mut rng = rng_stream(seed, STREAM_SOURCES);
    let fs = sample_rate as f64;
    let nyquist = 0.5 * fs;
    let base_f0 = rng.random_range(90.0..220.0);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.1) * fs) as usize;
    let mut phase = 0.0;
    while pos < len {
        let voiced = rng.random::<f64>() < 0.8;
        let dur = if voiced {
            rng.random_range(0.12..0.32)
        } else {
            rng.random_range(0.05..0.12)
        };
        let n = ((dur * fs) as usize).min(len - pos);
        if voiced {
            let f0_start = base_f0 * rng.random_range(0.85..1.15);
            let f0_end = base_f0 * rng.random_range(0.85..1.15);
            let formants = [
                (rng.random_range(300.0..850.0), 90.0),
                (rng.random_range(900.0..2300.0), 120.0),
                (rng.random_range(2400.0..3200.0), 180.0),
            ];
            let gain = rng.random_range(0.4..1.0);
            for k in 0..n {
                let u = k as f64 / n as f64;
                let f0 = f0_start + (f0_end - f0_start) * u;
                phase += 2.0 * PI * f0 / fs;
                let env = (PI * u).sin().powi(2);
                let mut v = 0.0;
                let mut h = 1;
                while h as f64 * f0 < 0.9 * nyquist {
                    let fh = h as f64 * f0;
                    let resonance: f64 = formants
                        .iter()
                        .map(|(fc, bw)| 1.0 / (1.0 + ((fh - fc) / bw).powi(2)))
                        .sum();
                    v += (resonance + 0.02) / (h as f64).sqrt() * (h as f64 * phase).sin();
                    h += 1;
                }
                out[pos + k] += gain * env * v;
            }
        } else {
            let gain = rng.random_range(0.05..0.2);
            let mut prev = 0.0;
            for k in 0..n {
                let u = k as f64 / n as f64;
                let white: f64 = rng.sample(StandardNormal);
                // First difference tilts the noise towards high frequencies.
                out[pos + k] += gain * (PI * u).sin() * (white - prev);
                prev = white;
            }
        }
        pos += n + (rng.random_range(0.03..0.15) * fs) as usize;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    out
}

/// `count` independent speech-like channels from consecutive seeds.
pub fn speech_like_sources(seed: u64, count: usize, len: usize, sample_rate: u32) -> TimeSignal {
    let channels: Vec<Vec<f64>> = (0..count as u64)
        .map(|i| speech_like(seed.wrapping_mul(1000).wrapping_add(i), len, sample_rate))
        .collect();
    let mut samples = Array2::zeros((count, len));
    for (mut row, ch) in samples.axis_iter_mut(Axis(0)).zip(channels) {
        row.assign(&ndarray::Array1::from(ch));
    }
    TimeSignal::new(samples, sample_rate)
}
