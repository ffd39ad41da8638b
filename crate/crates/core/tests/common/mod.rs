//! Dense reference constructions and random inputs shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use cbss::demixing::prox_logdet;
use cbss::{DemixStack, ObservationTensor, Spectrogram, TimeSignal, WindowPair};
use nalgebra::Matrix2;
use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(channels: usize, len: usize, seed: u64) -> TimeSignal {
    let mut r = rng(seed);
    TimeSignal::new(Array2::from_shape_simple_fn((channels, len), || r.random_range(-1.0..1.0)), 16000)
}

pub fn random_complex(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn random_spec(channels: usize, win: &WindowPair, len: usize, seed: u64) -> Spectrogram {
    let mut r = rng(seed);
    let mut s = Spectrogram::zeros(channels, win.fft_size(), win.hop(), len);
    s.data.mapv_inplace(|_| random_complex(&mut r));
    s
}

pub fn random_stack(channels: usize, bins: usize, seed: u64) -> DemixStack {
    let mut r = rng(seed);
    DemixStack { matrices: Array3::from_shape_simple_fn((bins, channels, channels), || random_complex(&mut r)) }
}

pub fn max_abs_diff(a: impl IntoIterator<Item = Complex64>, b: impl IntoIterator<Item = Complex64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Signal position and modulation phase index of frame `t`, tap `n`.
fn tap(win: &WindowPair, len: usize, t: usize, n: usize) -> (usize, usize) {
    let unwrapped = t * win.hop() + n;
    (unwrapped % len, unwrapped)
}

/// Analysis atoms for all `F` frequencies as a `(T * F) x L` matrix;
/// row `t * F + f` holds the conjugated atom.
pub fn full_analysis_matrix(win: &WindowPair, len: usize) -> DMatrix<Complex64> {
    let (f_size, frames) = (win.fft_size(), len / win.hop());
    let mut phi = DMatrix::zeros(frames * f_size, len);
    for t in 0..frames {
        for f in 0..f_size {
            for n in 0..f_size {
                let (l, phase) = tap(win, len, t, n);
                let arg = -2.0 * PI * (f * phase) as f64 / f_size as f64;
                phi[(t * f_size + f, l)] += Complex64::from_polar(win.analysis()[n], arg);
            }
        }
    }
    phi
}

/// Analysis matrix restricted to the stored bins `0..=F/2`, rows `t * B + f`.
pub fn analysis_matrix(win: &WindowPair, len: usize) -> DMatrix<Complex64> {
    let full = full_analysis_matrix(win, len);
    let (f_size, bins, frames) = (win.fft_size(), win.num_bins(), len / win.hop());
    DMatrix::from_fn(frames * bins, len, |r, c| full[((r / bins) * f_size + r % bins, c)])
}

/// Synthesis as a complex `L x (T * B)` matrix; the real part of its product
/// with the stacked one-sided coefficients is the signal. Interior bins
/// stand for a conjugate pair and count twice.
pub fn synthesis_matrix(win: &WindowPair, len: usize) -> DMatrix<Complex64> {
    let (f_size, bins, frames) = (win.fft_size(), win.num_bins(), len / win.hop());
    let mut psi = DMatrix::zeros(len, frames * bins);
    for t in 0..frames {
        for f in 0..bins {
            let weight = if f == 0 || f == bins - 1 { 1.0 } else { 2.0 };
            for n in 0..f_size {
                let (l, phase) = tap(win, len, t, n);
                let arg = 2.0 * PI * (f * phase) as f64 / f_size as f64;
                psi[(l, t * bins + f)] += Complex64::from_polar(weight * win.synthesis()[n], arg);
            }
        }
    }
    psi
}

pub fn dense_stft(win: &WindowPair, x: &[f64]) -> Vec<Complex64> {
    let xv = nalgebra::DVector::from_iterator(x.len(), x.iter().map(|&v| Complex64::from(v)));
    (analysis_matrix(win, x.len()) * xv).iter().copied().collect()
}

/// Real-valued dense synthesis of one channel; edge-bin imaginary parts are dropped.
pub fn dense_istft(win: &WindowPair, len: usize, coeffs: &[Complex64]) -> Vec<f64> {
    let bins = win.num_bins();
    let cleaned: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| if i % bins == 0 || i % bins == bins - 1 { Complex64::from(c.re) } else { *c })
        .collect();
    let cv = nalgebra::DVector::from_vec(cleaned);
    (synthesis_matrix(win, len) * cv).iter().map(|z| z.re).collect()
}

/// Channel `m` of a spectrogram flattened as `t * B + f`.
pub fn flatten_channel(spec: &Spectrogram, m: usize) -> Vec<Complex64> {
    spec.data.index_axis(ndarray::Axis(0), m).iter().copied().collect()
}

/// The observation operator `w -> Xw` as a dense matrix from the stacked
/// demixing entries (`DemixStack::to_vector` order) to the flattened
/// separated spectrogram (`(n, t, f)` row-major).
pub fn observation_matrix(obs: &ObservationTensor) -> DMatrix<Complex64> {
    let x = &obs.spec().data;
    let (m, frames, bins) = x.dim();
    let mut a = DMatrix::zeros(m * frames * bins, bins * m * m);
    for n in 0..m {
        for t in 0..frames {
            for f in 0..bins {
                for k in 0..m {
                    a[(n * frames * bins + t * bins + f, f * m * m + n * m + k)] = x[[k, t, f]];
                }
            }
        }
    }
    a
}

pub fn small_spec(seed: u64, bins: usize) -> Spectrogram {
    let mut r = rng(seed);
    let fft_size = 2 * (bins - 1).max(1);
    let mut s = Spectrogram::zeros(2, fft_size, fft_size, 3 * fft_size);
    s.data = Array3::from_shape_simple_fn((2, 3, bins), || random_complex(&mut r) * r.random_range(0.0..2.0));
    s
}

pub fn l1(s: &Spectrogram) -> f64 {
    s.data.iter().map(|z| z.norm()).sum()
}

pub fn l21(s: &Spectrogram) -> f64 {
    s.data
        .lanes(ndarray::Axis(2))
        .into_iter()
        .map(|g| g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .sum()
}

pub fn dist2(a: &Spectrogram, b: &Spectrogram) -> f64 {
    a.data.iter().zip(b.data.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

pub fn perturbed(s: &Spectrogram, seed: u64) -> Spectrogram {
    let mut r = rng(seed);
    let scale = 10f64.powf(r.random_range(-6.0..0.0));
    let mut out = s.clone();
    out.data.mapv_inplace(|z| z + random_complex(&mut r) * scale);
    out
}

/// Smallest objective gain of 1000 random perturbations over the prox output,
/// across 100 random inputs. Negative means a perturbation did better.
pub fn penalty_prox_margin(
    penalty: fn(&Spectrogram) -> f64,
    prox: fn(&Spectrogram, f64) -> Spectrogram,
    bins: usize,
    base_seed: u64,
) -> f64 {
    let mut margin = f64::INFINITY;
    for case in 0..100 {
        let z = small_spec(1000 * base_seed + case, bins);
        let tau = 0.05 + 0.01 * case as f64;
        let objective = |g: &Spectrogram| tau * penalty(g) + 0.5 * dist2(&z, g);
        let p = prox(&z, tau);
        let best = objective(&p);
        for k in 0..1000 {
            let q = perturbed(&p, 1_000_000 * base_seed + 1000 * case + k);
            margin = margin.min(objective(&q) - best);
        }
    }
    margin
}

pub fn logdet_objective(w: &DemixStack, g: &DemixStack, mu: f64) -> f64 {
    let logs: f64 = g
        .matrices
        .outer_iter()
        .map(|m| {
            let a = Matrix2::new(m[[0, 0]], m[[0, 1]], m[[1, 0]], m[[1, 1]]);
            -a.determinant().norm().ln()
        })
        .sum();
    let d: f64 = w.matrices.iter().zip(g.matrices.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    mu * logs + 0.5 * d
}

/// Gradient descent with backtracking on `-mu log|det G| + |W - G|^2 / 2`.
pub fn minimize_logdet(w: Matrix2<Complex64>, mu: f64) -> Matrix2<Complex64> {
    let f = |g: &Matrix2<Complex64>| -mu * g.determinant().norm().ln() + 0.5 * (w - g).norm_squared();
    let mut g = w + Matrix2::identity();
    let mut step = 0.5;
    for _ in 0..100_000 {
        let inv_h = g.try_inverse().expect("iterate stays invertible").adjoint();
        let grad = (g - w) - inv_h * Complex64::from(mu);
        if grad.norm() < 1e-13 {
            break;
        }
        let current = f(&g);
        loop {
            let candidate = g - grad * Complex64::from(step);
            let value = f(&candidate);
            if value.is_finite() && value <= current - 0.25 * step * grad.norm_squared() {
                g = candidate;
                step = (step * 1.5).min(1.0);
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return g;
            }
        }
    }
    g
}


/// Same as [`penalty_prox_margin`] for the log-determinant prox on 2x2 stacks.
pub fn logdet_prox_margin(base_seed: u64) -> f64 {
    let mut margin = f64::INFINITY;
    for case in 0..100u64 {
        let w = random_stack(2, 2, 1000 * base_seed + case);
        let mu = 0.1 + 0.02 * case as f64;
        let p = prox_logdet(&w, mu).unwrap();
        let best = logdet_objective(&w, &p, mu);
        for k in 0..1000u64 {
            let mut r = rng(1_000_000 * base_seed + 1000 * case + k);
            let scale = 10f64.powf(r.random_range(-6.0..0.0));
            let mut q = p.clone();
            q.matrices.mapv_inplace(|z| z + random_complex(&mut r) * scale);
            margin = margin.min(logdet_objective(&w, &q, mu) - best);
        }
    }
    margin
}

/// Largest entrywise gap between the prox and numerical minimization over `cases` 2x2 inputs.
pub fn logdet_numeric_gap(cases: u64) -> f64 {
    let mut gap = 0.0f64;
    for case in 0..cases {
        let w = random_stack(2, 1, 500 + case);
        let mu = 0.2 + 0.05 * case as f64;
        let p = prox_logdet(&w, mu).unwrap();
        let m = w.matrix(0);
        let numeric = minimize_logdet(Matrix2::new(m[[0, 0]], m[[0, 1]], m[[1, 0]], m[[1, 1]]), mu);
        let pm = p.matrix(0);
        for i in 0..2 {
            for j in 0..2 {
                gap = gap.max((pm[[i, j]] - numeric[(i, j)]).norm());
            }
        }
    }
    gap
}
