//! Source-model penalties and their proximity operators.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use num_complex::Complex64;

use crate::error::{BssError, Result};
use crate::stft::Spectrogram;

/// A penalty on the separated spectrogram together with its proximity
/// operator. The solver only needs these two operations, so new source
/// models plug in by implementing this trait.
pub trait SourceModel: Send + Sync {
    /// Penalty value at `z`.
    fn value(&self, z: &Spectrogram) -> f64;

    /// Proximity operator of `(1 / mu2)` times the penalty.
    fn prox(&self, z: &Spectrogram, mu2: f64) -> Spectrogram;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Bin-wise l1 norm (Laplace ICA).
    LaplaceIca,
    /// l2 norm across frequency per frame and channel, summed (Laplace IVA).
    LaplaceIva,
}

impl ModelKind {
    /// Threshold scale used by the command-line defaults.
    pub fn default_lambda(self) -> f64 {
        match self {
            ModelKind::LaplaceIca => 0.1,
            ModelKind::LaplaceIva => 1.0,
        }
    }
}

impl FromStr for ModelKind {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ica-l1" | "ica" | "laplace-ica" => Ok(ModelKind::LaplaceIca),
            "iva-l21" | "iva" | "laplace-iva" => Ok(ModelKind::LaplaceIva),
            other => Err(BssError::UnknownModel(other.to_string())),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::LaplaceIca => write!(f, "ica-l1"),
            ModelKind::LaplaceIva => write!(f, "iva-l21"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyModel {
    pub kind: ModelKind,
    pub lambda: f64,
}

impl PenaltyModel {
    pub fn new(kind: ModelKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(BssError::Config(format!("lambda must be positive, got {lambda}")));
        }
        Ok(PenaltyModel { kind, lambda })
    }

    pub fn laplace_ica(lambda: f64) -> Result<Self> {
        Self::new(ModelKind::LaplaceIca, lambda)
    }

    pub fn laplace_iva(lambda: f64) -> Result<Self> {
        Self::new(ModelKind::LaplaceIva, lambda)
    }
}

impl SourceModel for PenaltyModel {
    fn value(&self, z: &Spectrogram) -> f64 {
        penalty_value(self, z)
    }

    fn prox(&self, z: &Spectrogram, mu2: f64) -> Spectrogram {
        prox_penalty(self, z, mu2)
    }
}

pub fn penalty_value(model: &PenaltyModel, z: &Spectrogram) -> f64 {
    let raw: f64 = match model.kind {
        ModelKind::LaplaceIca => z.data.iter().map(|v| v.norm_sqr().sqrt()).sum(),
        ModelKind::LaplaceIva => z
            .data
            .lanes(Axis(2))
            .into_iter()
            .map(|group| group.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .sum(),
    };
    model.lambda * raw
}

/// Entrywise soft thresholding `(1 - threshold / |z|)_+ z`.
pub fn prox_l1(z: &Spectrogram, threshold: f64) -> Spectrogram {
    let mut out = z.clone();
    out.data
        .mapv_inplace(|v| v * shrink_factor(v.norm_sqr().sqrt(), threshold));
    out
}

/// Group thresholding over all bins of each (channel, frame).
pub fn prox_l21(z: &Spectrogram, threshold: f64) -> Spectrogram {
    let mut out = z.clone();
    for mut group in out.data.lanes_mut(Axis(2)) {
        let zeta = group.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let k = Complex64::from(shrink_factor(zeta, threshold));
        group.mapv_inplace(|v| v * k);
    }
    out
}

/// `prox_{(1/mu2) P}` for the model's penalty `P`.
pub fn prox_penalty(model: &PenaltyModel, z: &Spectrogram, mu2: f64) -> Spectrogram {
    let threshold = model.lambda / mu2;
    match model.kind {
        ModelKind::LaplaceIca => prox_l1(z, threshold),
        ModelKind::LaplaceIva => prox_l21(z, threshold),
    }
}

fn shrink_factor(magnitude: f64, threshold: f64) -> f64 {
    if magnitude <= threshold {
        0.0
    } else {
        1.0 - threshold / magnitude
    }
}
