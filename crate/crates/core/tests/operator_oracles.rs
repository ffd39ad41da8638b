//! Fast operators against explicit dense matrices on small grids.

mod common;

use std::f64::consts::PI;

use cbss::demixing::{adjoint_correlate, apply_demix, operator_norm};
use cbss::stft::{design_tight_window, istft, project_consistent, stft};
use cbss::{ObservationTensor, Spectrogram, WindowPair, WindowShape};
use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const TOL: f64 = 1e-10;

fn grids() -> Vec<(WindowPair, usize)> {
    vec![
        (design_tight_window(WindowShape::Hann, 64, 32).unwrap(), 256),
        (design_tight_window(WindowShape::Hann, 32, 8).unwrap(), 96),
        (design_tight_window(WindowShape::Rectangular, 16, 16).unwrap(), 48),
        (WindowPair::canonical_dual(WindowShape::Hann, 32, 8).unwrap(), 160),
    ]
}

#[test]
fn tight_frame_matrix_is_an_isometry() {
    let win = design_tight_window(WindowShape::Hann, 64, 32).unwrap();
    let phi = full_analysis_matrix(&win, 256);
    let gram = phi.adjoint() * &phi;
    let err = (gram - DMatrix::<Complex64>::identity(256, 256)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err <= TOL, "frame operator deviates from identity by {err}");
}

#[test]
fn phase_matches_literal_definition_when_fft_size_divides_length() {
    // Phase taken from the wrapped sample index, as in the textbook formula.
    let win = design_tight_window(WindowShape::Hann, 32, 16).unwrap();
    let len = 128;
    let x = random_signal(1, len, 4);
    let spec = stft(&x, &win).unwrap();
    let f_size = 32;
    for t in 0..len / 16 {
        for f in 0..win.num_bins() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..len {
                let n = (l + len - t * 16) % len;
                if n < f_size {
                    let arg = -2.0 * PI * (l * f) as f64 / f_size as f64;
                    acc += x.samples[[0, l]] * Complex64::from_polar(win.analysis()[n], arg);
                }
            }
            assert!((acc - spec.data[[0, t, f]]).norm() <= TOL);
        }
    }
}

#[test]
fn stft_matches_dense_analysis() {
    for (k, (win, len)) in grids().into_iter().enumerate() {
        let x = random_signal(2, len, k as u64);
        let spec = stft(&x, &win).unwrap();
        for m in 0..2 {
            let dense = dense_stft(&win, &x.channel(m));
            assert!(max_abs_diff(flatten_channel(&spec, m), dense) <= TOL, "grid {k}");
        }
    }
}

#[test]
fn istft_matches_dense_synthesis() {
    for (k, (win, len)) in grids().into_iter().enumerate() {
        let g = random_spec(2, &win, len, 10 + k as u64);
        let x = istft(&g, &win, 16000).unwrap();
        for m in 0..2 {
            let dense = dense_istft(&win, len, &flatten_channel(&g, m));
            let err = x.channel(m).iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= TOL, "grid {k}: {err}");
        }
    }
}

#[test]
fn projection_matches_dense_composition() {
    for (k, (win, len)) in grids().into_iter().enumerate() {
        let g = random_spec(2, &win, len, 20 + k as u64);
        let p = project_consistent(&g, &win).unwrap();
        for m in 0..2 {
            let x = dense_istft(&win, len, &flatten_channel(&g, m));
            let dense = dense_stft(&win, &x);
            assert!(max_abs_diff(flatten_channel(&p, m), dense) <= TOL, "grid {k}");
        }
    }
}

#[test]
fn pulse_projection_matches_pseudo_inverse_and_spreads() {
    let win = design_tight_window(WindowShape::Hann, 64, 32).unwrap();
    let len = 256;
    let (t0, f0) = (3, 10);
    let mut pulse = Spectrogram::zeros(1, 64, 32, len);
    pulse.data[[0, t0, f0]] = Complex64::new(1.0, 0.0);
    let p = project_consistent(&pulse, &win).unwrap();

    // Two-sided extension of the pulse, then Phi Phi^+ on the full grid.
    let phi = full_analysis_matrix(&win, len);
    let mut g = DVector::zeros(phi.nrows());
    g[t0 * 64 + f0] = Complex64::new(1.0, 0.0);
    g[t0 * 64 + (64 - f0)] = Complex64::new(1.0, 0.0);
    let pinv = phi.clone().pseudo_inverse(1e-12).unwrap();
    let full = &phi * (pinv * g);
    let bins = win.num_bins();
    for t in 0..len / 32 {
        for f in 0..bins {
            assert!((full[t * 64 + f] - p.data[[0, t, f]]).norm() <= TOL);
        }
    }
    // Energy reaches the neighbouring bins of the same frame.
    assert!(p.data[[0, t0, f0 + 1]].norm() > 1e-3);
    assert!(p.data[[0, t0, f0 - 1]].norm() > 1e-3);
    assert!(p.data[[0, t0, f0]].norm() < 1.0);
}

fn small_observation(seed: u64, channels: usize) -> (ObservationTensor, WindowPair) {
    let win = design_tight_window(WindowShape::Hann, 16, 8).unwrap();
    let x = random_signal(channels, 64, seed);
    (ObservationTensor::new(stft(&x, &win).unwrap()), win)
}

#[test]
fn apply_and_adjoint_match_dense_operator() {
    for channels in [1, 2] {
        let (obs, _) = small_observation(channels as u64, channels);
        let a = observation_matrix(&obs);
        let w = random_stack(channels, obs.bins(), 7);
        let y = apply_demix(&w, &obs).unwrap();
        let dense = &a * DVector::from_vec(w.to_vector());
        assert!(max_abs_diff(y.data.iter().copied(), dense.iter().copied()) <= TOL);

        let g = random_spec(channels, &design_tight_window(WindowShape::Hann, 16, 8).unwrap(), 64, 9);
        let flat = DVector::from_iterator(g.data.len(), g.data.iter().copied());
        let dense_adj = a.adjoint() * flat;
        let fast = adjoint_correlate(&obs, &g).unwrap();
        assert!(max_abs_diff(fast.to_vector(), dense_adj.iter().copied()) <= TOL);
    }
}

#[test]
fn operator_norm_matches_dense_spectral_norm() {
    for channels in [1, 2] {
        let (obs, _) = small_observation(30 + channels as u64, channels);
        let a = observation_matrix(&obs);
        let dense = a.singular_values().max();
        assert!((operator_norm(&obs) - dense).abs() <= TOL * dense.max(1.0));
    }
}
