//! Determined blind source separation in the time-frequency domain.
//!
//! The separation problem is posed as the minimization of a source-model
//! penalty plus a log-determinant term over per-frequency demixing matrices,
//! and solved by primal-dual splitting. The *consistent* variant evaluates the
//! penalty only on the consistent part of the separated spectrogram, i.e.
//! after projecting it onto the image of the STFT, which couples the otherwise
//! independent frequency bins and counteracts permutation misalignment.
//!
//! Modules:
//! - [`stft`]: circular STFT/iSTFT, tight windows, consistency projection.
//! - [`demixing`]: demixing stacks, the observation operator and its adjoint,
//!   the log-determinant regularizer and its proximity operator.
//! - [`source_models`]: Laplace ICA / IVA penalties and their proximity operators.
//! - [`pds`]: the primal-dual splitting solver and the separation pipeline.
//! - [`mixsim`]: seeded mixtures, synthetic room responses and spectrogram perturbations.
//! - [`evaluation`]: SDR/SIR/SAR with allowed distortion filters.

pub mod demixing;
pub mod error;
pub mod evaluation;
pub mod mixsim;
pub mod pds;
pub mod source_models;
pub mod stft;

pub use evaluation::{MetricsReport, SourceMetrics};
pub use demixing::{DemixStack, ObservationTensor};
pub use error::{BssError, Result};

pub use pds::{Diagnostics, SolverConfig, SolverState, Variant};
pub use source_models::{PenaltyModel, SourceModel};
pub use stft::{Spectrogram, TimeSignal, WindowPair, WindowShape};
