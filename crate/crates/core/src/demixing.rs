//! Per-frequency demixing matrices and the operators acting on them.
//!
//! The observation operator maps the stacked demixing matrices to the
//! separated spectrogram. It is block diagonal over frequency with blocks built
//! from the `T x M` matrix `chi[f]` of mixture coefficients, so it is never
//! assembled; products are evaluated bin by bin.

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{BssError, Result};
use crate::stft::Spectrogram;

/// Value reported by [`logdet_penalty`] for singular stacks.
pub const SINGULAR_PENALTY: f64 = 1e300;

/// `bins` complex `M x M` demixing matrices, stored `bins x M x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixStack {
    pub matrices: Array3<Complex64>,
}

impl DemixStack {
    pub fn identity(channels: usize, bins: usize) -> Self {
        let mut matrices = Array3::zeros((bins, channels, channels));
        for mut w in matrices.outer_iter_mut() {
            w.diag_mut().fill(Complex64::new(1.0, 0.0));
        }
        DemixStack { matrices }
    }

    pub fn zeros(channels: usize, bins: usize) -> Self {
        DemixStack { matrices: Array3::zeros((bins, channels, channels)) }
    }

    pub fn from_matrices(matrices: Array3<Complex64>) -> Result<Self> {
        let (_, rows, cols) = matrices.dim();
        if rows != cols {
            return Err(BssError::Dimension(format!(
                "demixing matrices must be square, got {rows}x{cols}"
            )));
        }
        Ok(DemixStack { matrices })
    }

    /// Same matrix in every bin.
    pub fn repeated(matrix: &Array2<Complex64>, bins: usize) -> Result<Self> {
        let m = matrix.nrows();
        if matrix.ncols() != m {
            return Err(BssError::Dimension("demixing matrix must be square".into()));
        }
        let mut matrices = Array3::zeros((bins, m, m));
        for mut w in matrices.outer_iter_mut() {
            w.assign(matrix);
        }
        Ok(DemixStack { matrices })
    }

    pub fn channels(&self) -> usize {
        self.matrices.len_of(Axis(1))
    }

    pub fn bins(&self) -> usize {
        self.matrices.len_of(Axis(0))
    }

    pub fn matrix(&self, bin: usize) -> ArrayView2<'_, Complex64> {
        self.matrices.index_axis(Axis(0), bin)
    }

    /// Row-major concatenation of all matrices, bin after bin.
    pub fn to_vector(&self) -> Vec<Complex64> {
        self.matrices.iter().copied().collect()
    }

    /// Inverse of [`DemixStack::to_vector`].
    pub fn from_vector(v: &[Complex64], channels: usize, bins: usize) -> Result<Self> {
        let matrices = Array3::from_shape_vec((bins, channels, channels), v.to_vec())
            .map_err(|e| BssError::Dimension(e.to_string()))?;
        Ok(DemixStack { matrices })
    }

    /// Real part of the Frobenius inner product summed over bins.
    pub fn inner(&self, other: &DemixStack) -> f64 {
        self.matrices
            .iter()
            .zip(other.matrices.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.matrices.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Mixture spectrogram viewed as the observation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    spec: Spectrogram,
}

impl ObservationTensor {
    pub fn new(spec: Spectrogram) -> Self {
        ObservationTensor { spec }
    }

    pub fn spec(&self) -> &Spectrogram {
        &self.spec
    }

    pub fn into_spec(self) -> Spectrogram {
        self.spec
    }

    pub fn channels(&self) -> usize {
        self.spec.channels()
    }

    pub fn frames(&self) -> usize {
        self.spec.frames()
    }

    pub fn bins(&self) -> usize {
        self.spec.bins()
    }

    /// `T x M` matrix whose column `m` holds channel `m` of bin `f` over time.
    pub fn chi(&self, bin: usize) -> Array2<Complex64> {
        self.spec.data.index_axis(Axis(2), bin).t().to_owned()
    }

    pub fn scaled(&self, factor: f64) -> ObservationTensor {
        ObservationTensor { spec: self.spec.with_data(&self.spec.data * Complex64::from(factor)) }
    }

    fn check_stack(&self, w: &DemixStack) -> Result<()> {
        if w.channels() != self.channels() || w.bins() != self.bins() {
            return Err(BssError::Dimension(format!(
                "demixing stack is {} bins of {}x{}, observation has {} bins and {} channels",
                w.bins(),
                w.channels(),
                w.channels(),
                self.bins(),
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Separated spectrogram: channel `n` at `(t, f)` is `sum_m W[f][n, m] x_m[t, f]`.
pub fn apply_demix(w: &DemixStack, obs: &ObservationTensor) -> Result<Spectrogram> {
    obs.check_stack(w)?;
    let x = &obs.spec.data;
    let (channels, frames, bins) = x.dim();
    let mut out = obs.spec.zeros_like();
    out.data
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(n, mut dst)| {
            for m in 0..channels {
                let src = x.index_axis(Axis(0), m);
                for t in 0..frames {
                    let src_row = src.row(t);
                    let mut dst_row = dst.row_mut(t);
                    for f in 0..bins {
                        dst_row[f] += w.matrices[[f, n, m]] * src_row[f];
                    }
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`apply_demix`] with respect to `W`:
/// `result[f][n, m] = sum_t conj(x_m[t, f]) y_n[t, f]`.
pub fn adjoint_correlate(obs: &ObservationTensor, y: &Spectrogram) -> Result<DemixStack> {
    obs.spec.check_same_grid(y)?;
    let x = &obs.spec.data;
    let (channels, frames, bins) = x.dim();
    let rows: Vec<Vec<Complex64>> = (0..channels * channels)
        .into_par_iter()
        .map(|nm| {
            let (n, m) = (nm / channels, nm % channels);
            let mut acc = vec![Complex64::new(0.0, 0.0); bins];
            let xr = x.index_axis(Axis(0), m);
            let yr = y.data.index_axis(Axis(0), n);
            for t in 0..frames {
                for ((a, xv), yv) in acc.iter_mut().zip(xr.row(t)).zip(yr.row(t)) {
                    *a += xv.conj() * yv;
                }
            }
            acc
        })
        .collect();
    let mut out = DemixStack::zeros(channels, bins);
    for (nm, acc) in rows.into_iter().enumerate() {
        let (n, m) = (nm / channels, nm % channels);
        for (f, v) in acc.into_iter().enumerate() {
            out.matrices[[f, n, m]] = v;
        }
    }
    Ok(out)
}

fn to_nalgebra(w: ArrayView2<'_, Complex64>) -> DMatrix<Complex64> {
    let (r, c) = w.dim();
    DMatrix::from_fn(r, c, |i, j| w[[i, j]])
}

fn singular_values(w: ArrayView2<'_, Complex64>) -> Vec<f64> {
    to_nalgebra(w).singular_values().iter().copied().collect()
}

/// `-sum_f sum_m log sigma_m(W[f])`, or [`SINGULAR_PENALTY`] if any matrix is singular.
pub fn logdet_penalty(w: &DemixStack) -> f64 {
    let per_bin: Vec<f64> = w
        .matrices
        .outer_iter()
        .into_par_iter()
        .map(|m| singular_values(m).iter().map(|s| -s.ln()).sum())
        .collect();
    let total: f64 = per_bin.iter().sum();
    if total.is_finite() {
        total
    } else {
        SINGULAR_PENALTY
    }
}

/// Proximity operator of `mu` times the log-determinant penalty.
///
/// Each singular value is replaced by the positive root of
/// `s^2 - sigma s - mu = 0`, keeping the singular vectors.
pub fn prox_logdet(w: &DemixStack, mu: f64) -> Result<DemixStack> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(BssError::Config(format!("prox step must be positive, got {mu}")));
    }
    let m = w.channels();
    let blocks: Vec<Result<Vec<Complex64>>> = w
        .matrices
        .outer_iter()
        .into_par_iter()
        .enumerate()
        .map(|(f, block)| {
            let a = to_nalgebra(block);
            if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(BssError::Svd(f));
            }
            let svd = a.try_svd(true, true, 1e-15, 10_000).ok_or(BssError::Svd(f))?;
            let u = svd.u.as_ref().ok_or(BssError::Svd(f))?;
            let v_t = svd.v_t.as_ref().ok_or(BssError::Svd(f))?;
            let mut scaled = u.clone();
            for (j, s) in svd.singular_values.iter().enumerate() {
                let shrunk = 0.5 * (s + (s * s + 4.0 * mu).sqrt());
                scaled.column_mut(j).scale_mut(shrunk);
            }
            let out = scaled * v_t;
            let mut flat = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    flat.push(out[(i, j)]);
                }
            }
            Ok(flat)
        })
        .collect();
    let mut flat = Vec::with_capacity(w.matrices.len());
    for b in blocks {
        flat.extend(b?);
    }
    DemixStack::from_vector(&flat, m, w.bins())
}

/// Spectral norm of the observation operator: the largest singular value of
/// any `chi[f]`.
pub fn operator_norm(obs: &ObservationTensor) -> f64 {
    (0..obs.bins())
        .into_par_iter()
        .map(|f| {
            let chi = obs.chi(f);
            let gram = to_nalgebra(chi.t().mapv(|z| z.conj()).dot(&chi).view());
            gram.singular_values().max().sqrt()
        })
        .reduce(|| 0.0, f64::max)
}
