//! Circular short-time Fourier analysis/synthesis and the consistency projection.
//!
//! Frames are taken circularly: the frame at time index `t` reads samples
//! `(a*t + n) mod L` for `n < F`, so a signal of length `L` (a multiple of the
//! hop `a`) has exactly `L / a` frames. The coefficient at `(t, f)` is the
//! inner product of the signal with the shifted, modulated analysis window,
//!
//! ```text
//! X[t, f] = sum_l x[l] w[l - a t] exp(-2 pi i l f / F),
//! ```
//!
//! i.e. the phase is referenced to absolute time, not to the frame start.
//! Only the non-negative half of the spectrum (`F/2 + 1` bins) is stored; the
//! other half is implied by Hermitian symmetry.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{BssError, Result};

/// Tolerance used when validating perfect reconstruction of a window pair.
const PR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowShape {
    Hann,
    Rectangular,
}

impl WindowShape {
    /// Base (un-normalized) window of length `len`. Hann is the periodic variant.
    pub fn base(self, len: usize) -> Vec<f64> {
        match self {
            WindowShape::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowShape::Rectangular => vec![1.0; len],
        }
    }
}

impl FromStr for WindowShape {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(WindowShape::Hann),
            "rect" | "rectangular" => Ok(WindowShape::Rectangular),
            other => Err(BssError::Config(format!("unknown window shape `{other}`"))),
        }
    }
}

impl fmt::Display for WindowShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowShape::Hann => write!(f, "hann"),
            WindowShape::Rectangular => write!(f, "rectangular"),
        }
    }
}

/// Analysis/synthesis window pair satisfying perfect reconstruction on the
/// circular frame grid with hop `hop` and FFT length `fft_size`.
#[derive(Clone)]
pub struct WindowPair {
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    hop: usize,
    fft_size: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    /// `exp(-2 pi i k / F)` for `k < F`.
    twiddle: Arc<Vec<Complex64>>,
}

impl fmt::Debug for WindowPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WindowPair")
            .field("fft_size", &self.fft_size)
            .field("hop", &self.hop)
            .field("tight", &self.is_tight())
            .finish()
    }
}

impl PartialEq for WindowPair {
    fn eq(&self, other: &Self) -> bool {
        self.hop == other.hop
            && self.fft_size == other.fft_size
            && self.analysis == other.analysis
            && self.synthesis == other.synthesis
    }
}

impl WindowPair {
    /// Builds a pair from explicit windows, rejecting pairs that do not
    /// reconstruct perfectly.
    pub fn new(analysis: Vec<f64>, synthesis: Vec<f64>, hop: usize) -> Result<Self> {
        let fft_size = analysis.len();
        check_grid(fft_size, hop)?;
        if synthesis.len() != fft_size {
            return Err(BssError::Dimension(format!(
                "analysis window has {} samples, synthesis window {}",
                fft_size,
                synthesis.len()
            )));
        }
        if analysis.iter().chain(&synthesis).any(|v| !v.is_finite()) {
            return Err(BssError::Config("window contains non-finite values".into()));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let pair = WindowPair {
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
            twiddle: Arc::new(
                (0..fft_size)
                    .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / fft_size as f64))
                    .collect(),
            ),
            analysis,
            synthesis,
            hop,
            fft_size,
        };
        let err = pair.reconstruction_error();
        if err > PR_TOLERANCE {
            return Err(BssError::Config(format!(
                "window pair violates perfect reconstruction (max deviation {err:.3e})"
            )));
        }
        Ok(pair)
    }

    /// Tight pair obtained by dividing the base window by the square root of
    /// `F` times the hop-periodized sum of its squared shifts.
    pub fn tight(shape: WindowShape, fft_size: usize, hop: usize) -> Result<Self> {
        check_grid(fft_size, hop)?;
        let base = shape.base(fft_size);
        let norm = periodized_energy(&base, &base, hop);
        let mut tight = Vec::with_capacity(fft_size);
        for (n, &v) in base.iter().enumerate() {
            let s = norm[n % hop] * fft_size as f64;
            if s <= f64::EPSILON {
                return Err(BssError::DegenerateWindow(n));
            }
            tight.push(v / s.sqrt());
        }
        WindowPair::new(tight.clone(), tight, hop)
    }

    /// Non-tight pair: the base window for analysis and its canonical dual
    /// for synthesis.
    pub fn canonical_dual(shape: WindowShape, fft_size: usize, hop: usize) -> Result<Self> {
        check_grid(fft_size, hop)?;
        let base = shape.base(fft_size);
        let norm = periodized_energy(&base, &base, hop);
        let mut dual = Vec::with_capacity(fft_size);
        for (n, &v) in base.iter().enumerate() {
            let s = norm[n % hop] * fft_size as f64;
            if s <= f64::EPSILON {
                return Err(BssError::DegenerateWindow(n));
            }
            dual.push(v / s);
        }
        WindowPair::new(base, dual, hop)
    }

    pub fn analysis(&self) -> &[f64] {
        &self.analysis
    }

    pub fn synthesis(&self) -> &[f64] {
        &self.synthesis
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Number of stored (one-sided) frequency bins.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn is_tight(&self) -> bool {
        self.analysis == self.synthesis
    }

    /// The same pair with analysis and synthesis roles exchanged.
    pub fn swapped(&self) -> WindowPair {
        WindowPair {
            analysis: self.synthesis.clone(),
            synthesis: self.analysis.clone(),
            ..self.clone()
        }
    }

    /// Largest deviation of `F * sum_k w[n + k a] w~[n + k a]` from one.
    pub fn reconstruction_error(&self) -> f64 {
        periodized_energy(&self.analysis, &self.synthesis, self.hop)
            .iter()
            .map(|s| (s * self.fft_size as f64 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest admissible padded length that is at least `len`.
    pub fn padded_len(&self, len: usize) -> usize {
        let len = len.max(self.fft_size);
        len.div_ceil(self.hop) * self.hop
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len % self.hop != 0 {
            return Err(BssError::Dimension(format!(
                "signal length {len} is not a multiple of the hop {}",
                self.hop
            )));
        }
        if len < self.fft_size {
            return Err(BssError::Dimension(format!(
                "signal length {len} is shorter than the window ({})",
                self.fft_size
            )));
        }
        Ok(())
    }
}

/// Designs a tight window pair of the given shape.
pub fn design_tight_window(shape: WindowShape, fft_size: usize, hop: usize) -> Result<WindowPair> {
    WindowPair::tight(shape, fft_size, hop)
}

fn check_grid(fft_size: usize, hop: usize) -> Result<()> {
    if fft_size < 2 || fft_size % 2 != 0 {
        return Err(BssError::Config(format!(
            "FFT size must be even and at least 2, got {fft_size}"
        )));
    }
    if hop == 0 || fft_size % hop != 0 {
        return Err(BssError::Config(format!(
            "hop {hop} does not divide FFT size {fft_size}"
        )));
    }
    Ok(())
}

fn periodized_energy(a: &[f64], b: &[f64], hop: usize) -> Vec<f64> {
    let mut out = vec![0.0; hop];
    for (n, (x, y)) in a.iter().zip(b).enumerate() {
        out[n % hop] += x * y;
    }
    out
}

/// Real multichannel time-domain signal, `channels x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Array2<f64>,
    pub sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Self {
        TimeSignal { samples, sample_rate }
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(BssError::Dimension("channels differ in length".into()));
        }
        let flat: Vec<f64> = channels.iter().flatten().copied().collect();
        let samples = Array2::from_shape_vec((channels.len(), len), flat)
            .map_err(|e| BssError::Dimension(e.to_string()))?;
        Ok(TimeSignal { samples, sample_rate })
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn channel(&self, m: usize) -> Vec<f64> {
        self.samples.row(m).to_vec()
    }

    /// Zero-pads every channel at the end to `len` samples.
    pub fn zero_padded(&self, len: usize) -> TimeSignal {
        let mut samples = Array2::zeros((self.channels(), len.max(self.len())));
        samples
            .slice_mut(ndarray::s![.., ..self.len()])
            .assign(&self.samples);
        TimeSignal { samples, sample_rate: self.sample_rate }
    }

    pub fn truncated(&self, len: usize) -> TimeSignal {
        let len = len.min(self.len());
        TimeSignal {
            samples: self.samples.slice(ndarray::s![.., ..len]).to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }
}

/// One-sided complex spectrogram, shape `channels x frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub fft_size: usize,
    pub hop: usize,
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn zeros(channels: usize, fft_size: usize, hop: usize, signal_len: usize) -> Self {
        Spectrogram {
            data: Array3::zeros((channels, signal_len / hop, fft_size / 2 + 1)),
            fft_size,
            hop,
            signal_len,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Spectrogram {
            data: Array3::zeros(self.data.raw_dim()),
            ..*self
        }
    }

    /// Same grid, different coefficients.
    pub fn with_data(&self, data: Array3<Complex64>) -> Self {
        Spectrogram { data, ..*self }
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn same_grid(&self, other: &Spectrogram) -> bool {
        self.data.dim() == other.data.dim()
            && self.fft_size == other.fft_size
            && self.hop == other.hop
            && self.signal_len == other.signal_len
    }

    pub fn check_same_grid(&self, other: &Spectrogram) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(BssError::Dimension(format!(
                "spectrogram grids differ: {:?} (F={}, a={}, L={}) vs {:?} (F={}, a={}, L={})",
                self.data.dim(),
                self.fft_size,
                self.hop,
                self.signal_len,
                other.data.dim(),
                other.fft_size,
                other.hop,
                other.signal_len
            )))
        }
    }

    /// Plain Euclidean norm over the stored coefficients.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Multiplicity of a stored bin in the full two-sided spectrum.
    pub fn bin_weight(&self, bin: usize) -> f64 {
        if bin == 0 || 2 * bin == self.fft_size {
            1.0
        } else {
            2.0
        }
    }

    /// Real inner product of the implied two-sided spectrograms.
    pub fn weighted_inner(&self, other: &Spectrogram) -> f64 {
        self.data
            .indexed_iter()
            .zip(other.data.iter())
            .map(|(((_, _, f), a), b)| self.bin_weight(f) * (a * b.conj()).re)
            .sum()
    }

    /// Norm of the implied two-sided spectrogram.
    pub fn weighted_norm(&self) -> f64 {
        self.data
            .indexed_iter()
            .map(|((_, _, f), z)| self.bin_weight(f) * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_window(&self, win: &WindowPair) -> Result<()> {
        if self.fft_size != win.fft_size
            || self.hop != win.hop
            || self.bins() != win.num_bins()
            || self.signal_len % win.hop != 0
            || self.frames() != self.signal_len / win.hop
        {
            return Err(BssError::Dimension(format!(
                "spectrogram {:?} with F={}, a={}, L={} does not match window pair F={}, a={}",
                self.data.dim(),
                self.fft_size,
                self.hop,
                self.signal_len,
                win.fft_size,
                win.hop
            )));
        }
        Ok(())
    }
}

fn stft_channel(x: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, Complex64>, win: &WindowPair) {
    // `x` is a 1 x L view; `out` is T x B.
    let x = x.row(0);
    let len = x.len();
    let fft_size = win.fft_size;
    let mut frame = vec![0.0; fft_size];
    let mut spectrum = win.forward.make_output_vec();
    let mut scratch = win.forward.make_scratch_vec();
    for (t, mut row) in out.outer_iter_mut().enumerate() {
        let start = t * win.hop;
        for (n, slot) in frame.iter_mut().enumerate() {
            let mut l = start + n;
            if l >= len {
                l -= len;
            }
            *slot = x[l] * win.analysis[n];
        }
        win.forward
            .process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .expect("FFT buffers are sized by the planner");
        let shift = start % fft_size;
        let mut k = 0;
        for (dst, src) in row.iter_mut().zip(&spectrum) {
            *dst = win.twiddle[k] * src;
            k += shift;
            if k >= fft_size {
                k -= fft_size;
            }
        }
    }
}

fn istft_channel(spec: ArrayView2<'_, Complex64>, out: &mut [f64], win: &WindowPair) {
    let len = out.len();
    let fft_size = win.fft_size;
    let last = win.num_bins() - 1;
    let mut spectrum = win.inverse.make_input_vec();
    let mut frame = win.inverse.make_output_vec();
    let mut scratch = win.inverse.make_scratch_vec();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (t, row) in spec.outer_iter().enumerate() {
        let start = t * win.hop;
        let shift = start % fft_size;
        let mut k = 0;
        for (dst, src) in spectrum.iter_mut().zip(row.iter()) {
            *dst = win.twiddle[k].conj() * src;
            k += shift;
            if k >= fft_size {
                k -= fft_size;
            }
        }
        // Imaginary parts at DC and Nyquist have no real-signal counterpart.
        spectrum[0].im = 0.0;
        spectrum[last].im = 0.0;
        win.inverse
            .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .expect("inverse FFT input is Hermitian-consistent");
        for (n, (w, v)) in win.synthesis.iter().zip(&frame).enumerate() {
            let mut l = start + n;
            if l >= len {
                l -= len;
            }
            out[l] += w * v;
        }
    }
}

/// Forward STFT of every channel.
pub fn stft(signal: &TimeSignal, win: &WindowPair) -> Result<Spectrogram> {
    let len = signal.len();
    win.check_len(len)?;
    if !signal.is_finite() {
        return Err(BssError::Config("signal contains non-finite samples".into()));
    }
    let mut spec = Spectrogram::zeros(signal.channels(), win.fft_size, win.hop, len);
    spec.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(signal.samples.axis_chunks_iter(Axis(0), 1).into_par_iter())
        .for_each(|(out, x)| stft_channel(x, out, win));
    Ok(spec)
}

/// Inverse STFT (circular overlap-add with the synthesis window).
pub fn istft(spec: &Spectrogram, win: &WindowPair, sample_rate: u32) -> Result<TimeSignal> {
    spec.check_window(win)?;
    let mut samples = Array2::zeros((spec.channels(), spec.signal_len));
    samples
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(spec.data.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, s)| {
            istft_channel(s, out.as_slice_mut().expect("rows of a fresh array are contiguous"), win)
        });
    Ok(TimeSignal { samples, sample_rate })
}

/// `stft(istft(spec))`: the projection onto spectrograms of real signals.
pub fn project_consistent(spec: &Spectrogram, win: &WindowPair) -> Result<Spectrogram> {
    spec.check_window(win)?;
    let mut out = spec.zeros_like();
    let len = spec.signal_len;
    out.data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(spec.data.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(dst, src)| {
            let mut time = vec![0.0; len];
            istft_channel(src, &mut time, win);
            let time = Array2::from_shape_vec((1, len), time).expect("1 x L buffer");
            stft_channel(time.view(), dst, win);
        });
    Ok(out)
}

/// Relative distance of `spec` from the consistent subspace.
pub fn consistency_residual(spec: &Spectrogram, win: &WindowPair) -> Result<f64> {
    let projected = project_consistent(spec, win)?;
    let diff = spec.with_data(&spec.data - &projected.data);
    Ok(diff.weighted_norm() / spec.weighted_norm().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(channels: usize, len: usize, seed: u64) -> TimeSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSignal::new(
            Array2::from_shape_simple_fn((channels, len), || rng.random_range(-1.0..1.0)),
            16000,
        )
    }

    fn random_spec(channels: usize, win: &WindowPair, len: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = Spectrogram::zeros(channels, win.fft_size(), win.hop(), len);
        spec.data.mapv_inplace(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        spec
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let diff = (a - b).mapv(|v| v * v).sum().sqrt();
        diff / b.mapv(|v| v * v).sum().sqrt().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rectangular_non_overlapping_is_constant() {
        let win = design_tight_window(WindowShape::Rectangular, 64, 64).unwrap();
        assert!(win.is_tight());
        assert!(win.analysis().iter().all(|&v| v == 0.125));
        assert_eq!(win.reconstruction_error(), 0.0);
    }

    #[test]
    fn tightened_hann_reconstructs_one_second() {
        let win = design_tight_window(WindowShape::Hann, 1024, 512).unwrap();
        let x = random_signal(1, win.padded_len(16000), 1);
        let back = istft(&stft(&x, &win).unwrap(), &win, 16000).unwrap();
        assert!(rel_err(&back.samples, &x.samples) <= 1e-12);
    }

    #[test]
    fn window_design_errors() {
        assert!(matches!(
            design_tight_window(WindowShape::Hann, 64, 48),
            Err(BssError::Config(_))
        ));
        // Periodic Hann without overlap vanishes at n = 0.
        assert!(matches!(
            design_tight_window(WindowShape::Hann, 64, 64),
            Err(BssError::DegenerateWindow(0))
        ));
        assert!(WindowPair::new(vec![1.0; 8], vec![1.0; 8], 4).is_err());
    }

    #[test]
    fn window_shape_parses() {
        assert_eq!("hann".parse::<WindowShape>().unwrap(), WindowShape::Hann);
        assert_eq!("rect".parse::<WindowShape>().unwrap(), WindowShape::Rectangular);
        assert!("kaiser".parse::<WindowShape>().is_err());
    }

    #[test]
    fn zero_signal_and_zero_spectrogram() {
        let win = design_tight_window(WindowShape::Hann, 64, 32).unwrap();
        let x = TimeSignal::new(Array2::zeros((2, 256)), 8000);
        let spec = stft(&x, &win).unwrap();
        assert!(spec.data.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_eq!(spec.data.dim(), (2, 8, 33));
        let back = istft(&Spectrogram::zeros(2, 64, 32, 256), &win, 8000).unwrap();
        assert!(back.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_with_rectangular_window() {
        let win = design_tight_window(WindowShape::Rectangular, 64, 64).unwrap();
        let mut x = Array2::zeros((1, 256));
        x[[0, 0]] = 1.0;
        let spec = stft(&TimeSignal::new(x, 8000), &win).unwrap();
        for t in 0..spec.frames() {
            for f in 0..spec.bins() {
                let mag = spec.data[[0, t, f]].norm();
                if t == 0 {
                    assert!((mag - 0.125).abs() < 1e-15);
                } else {
                    assert_eq!(mag, 0.0);
                }
            }
        }
    }

    #[test]
    fn cosine_on_a_bin_stays_in_that_bin() {
        let win = design_tight_window(WindowShape::Rectangular, 64, 64).unwrap();
        let k = 5;
        let x = Array2::from_shape_fn((1, 256), |(_, l)| (2.0 * PI * (k * l) as f64 / 64.0).cos());
        let spec = stft(&TimeSignal::new(x, 8000), &win).unwrap();
        for t in 0..spec.frames() {
            for f in 0..spec.bins() {
                let mag = spec.data[[0, t, f]].norm();
                if f == k {
                    assert!((mag - 4.0).abs() < 1e-12, "bin {k} magnitude {mag}");
                } else {
                    assert!(mag < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_unpadded_length() {
        let win = design_tight_window(WindowShape::Hann, 64, 32).unwrap();
        assert!(matches!(stft(&random_signal(1, 250, 0), &win), Err(BssError::Dimension(_))));
        assert!(matches!(stft(&random_signal(1, 32, 0), &win), Err(BssError::Dimension(_))));
        let spec = Spectrogram::zeros(1, 128, 32, 256);
        assert!(istft(&spec, &win, 8000).is_err());
        assert!(project_consistent(&spec, &win).is_err());
    }

    #[test]
    fn edge_bins_are_real_for_real_signals() {
        let win = design_tight_window(WindowShape::Hann, 64, 16).unwrap();
        let spec = stft(&random_signal(2, 192, 3), &win).unwrap();
        for z in spec.data.slice(ndarray::s![.., .., 0]).iter() {
            assert!(z.im.abs() < 1e-14);
        }
        for z in spec.data.slice(ndarray::s![.., .., 32]).iter() {
            assert!(z.im.abs() < 1e-14);
        }
    }

    #[test]
    fn inconsistent_part_is_annihilated() {
        let win = design_tight_window(WindowShape::Hann, 128, 64).unwrap();
        let g = random_spec(2, &win, 1024, 7);
        let p = project_consistent(&g, &win).unwrap();
        let nu = g.with_data(&g.data - &p.data);
        let back = istft(&nu, &win, 8000).unwrap();
        let ref_norm = istft(&g, &win, 8000).unwrap().samples.mapv(|v| v * v).sum().sqrt();
        assert!(back.samples.mapv(|v| v * v).sum().sqrt() / ref_norm <= 1e-10);
        assert!((consistency_residual(&nu, &win).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn projection_fixes_consistent_and_is_idempotent() {
        let win = design_tight_window(WindowShape::Hann, 128, 32).unwrap();
        let spec = stft(&random_signal(1, 1024, 9), &win).unwrap();
        let p = project_consistent(&spec, &win).unwrap();
        let diff = spec.with_data(&p.data - &spec.data).weighted_norm();
        assert!(diff / spec.weighted_norm() <= 1e-10);
        assert!(consistency_residual(&spec, &win).unwrap() <= 1e-10);

        let g = random_spec(1, &win, 1024, 11);
        let p1 = project_consistent(&g, &win).unwrap();
        let p2 = project_consistent(&p1, &win).unwrap();
        assert!(p1.with_data(&p2.data - &p1.data).weighted_norm() / p1.weighted_norm() <= 1e-10);
    }

    #[test]
    fn canonical_dual_pair_reconstructs() {
        let win = WindowPair::canonical_dual(WindowShape::Hann, 64, 16).unwrap();
        assert!(!win.is_tight());
        let x = random_signal(1, 256, 5);
        let back = istft(&stft(&x, &win).unwrap(), &win, 8000).unwrap();
        assert!(rel_err(&back.samples, &x.samples) <= 1e-12);
        let swapped = win.swapped();
        let back = istft(&stft(&x, &swapped).unwrap(), &swapped, 8000).unwrap();
        assert!(rel_err(&back.samples, &x.samples) <= 1e-12);
    }

    #[test]
    fn padding_helpers() {
        let win = design_tight_window(WindowShape::Hann, 64, 32).unwrap();
        assert_eq!(win.padded_len(10), 64);
        assert_eq!(win.padded_len(65), 96);
        let x = random_signal(2, 70, 1);
        let p = x.zero_padded(96);
        assert_eq!(p.len(), 96);
        assert_eq!(p.truncated(70), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn stft_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let win = design_tight_window(WindowShape::Hann, 32, 8).unwrap();
            let x = random_signal(1, 128, seed);
            let y = random_signal(1, 128, seed + 1);
            let combo = TimeSignal::new(&x.samples * a + &y.samples * b, 8000);
            let lhs = stft(&combo, &win).unwrap();
            let sx = stft(&x, &win).unwrap();
            let sy = stft(&y, &win).unwrap();
            let rhs = &sx.data * Complex64::from(a) + &sy.data * Complex64::from(b);
            let err = (&lhs.data - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12);
        }

        #[test]
        fn analysis_and_synthesis_are_adjoint(seed in 0u64..1000) {
            let win = design_tight_window(WindowShape::Hann, 32, 16).unwrap();
            let x = random_signal(2, 160, seed);
            let g = random_spec(2, &win, 160, seed + 7);
            let lhs = stft(&x, &win).unwrap().weighted_inner(&g);
            let rhs = (&x.samples * &istft(&g, &win, 8000).unwrap().samples).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn tight_frames_preserve_energy(seed in 0u64..1000) {
            let win = design_tight_window(WindowShape::Hann, 64, 16).unwrap();
            let x = random_signal(1, 256, seed);
            let energy = x.samples.mapv(|v| v * v).sum().sqrt();
            let coeff = stft(&x, &win).unwrap().weighted_norm();
            prop_assert!((energy - coeff).abs() <= 1e-10 * energy);
        }

        #[test]
        fn projection_is_non_expansive(seed in 0u64..1000) {
            let win = design_tight_window(WindowShape::Hann, 32, 16).unwrap();
            let g = random_spec(1, &win, 128, seed);
            let p = project_consistent(&g, &win).unwrap();
            prop_assert!(p.weighted_norm() <= g.weighted_norm() * (1.0 + 1e-12));
        }
    }
}
