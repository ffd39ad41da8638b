//! Primal-dual splitting for determined separation.
//!
//! One iteration, with `L` the observation operator optionally followed by
//! the consistency projection `P`:
//!
//! ```text
//! w~  = prox_{mu1 I}( w - mu1 mu2 L^H P'(y) )
//! z   = y + P( L(2 w~ - w) )
//! y~  = z - prox_{P/mu2}(z)
//! y+  = alpha y~ + (1 - alpha) y
//! w+  = alpha w~ + (1 - alpha) w
//! ```
//!
//! `P'` is the projection with analysis and synthesis windows exchanged; for
//! tight windows it coincides with `P`. The plain variant replaces both by
//! the identity.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::demixing::{
    adjoint_correlate, apply_demix, logdet_penalty, operator_norm, prox_logdet, DemixStack,
    ObservationTensor,
};
use crate::error::{BssError, Result};
use crate::source_models::SourceModel;
use crate::stft::{istft, project_consistent, stft, Spectrogram, TimeSignal, WindowPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Penalty evaluated on the projected (consistent) separated spectrogram.
    Consistent,
    /// Penalty evaluated on the raw separated spectrogram.
    Plain,
}

impl FromStr for Variant {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(Variant::Consistent),
            "plain" => Ok(Variant::Plain),
            other => Err(BssError::Config(format!("unknown solver variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Consistent => write!(f, "consistent"),
            Variant::Plain => write!(f, "plain"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mu1: f64,
    pub mu2: f64,
    /// Over-relaxation, in (0, 2).
    pub alpha: f64,
    pub iters: usize,
    pub variant: Variant,
    /// Rescale the observation to unit operator norm before solving.
    pub normalize_input: bool,
    /// Record diagnostics every `log_every` iterations (the first and last
    /// iterations are always recorded). Zero records only the endpoints.
    pub log_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu1: 1.0,
            mu2: 1.0,
            alpha: 1.75,
            iters: 2000,
            variant: Variant::Consistent,
            normalize_input: true,
            log_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BssError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("mu1", self.mu1)?;
        positive("mu2", self.mu2)?;
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(BssError::Config(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Primal iterate (demixing stack) and dual iterate (spectrogram).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub w: DemixStack,
    pub y: Spectrogram,
    pub iteration: usize,
}

/// Identity demixing matrices and a zero dual variable.
pub fn init_state(obs: &ObservationTensor) -> SolverState {
    SolverState {
        w: DemixStack::identity(obs.channels(), obs.bins()),
        y: obs.spec().zeros_like(),
        iteration: 0,
    }
}

fn forward_projection(variant: Variant, spec: Spectrogram, win: &WindowPair) -> Result<Spectrogram> {
    match variant {
        Variant::Consistent => project_consistent(&spec, win),
        Variant::Plain => Ok(spec),
    }
}

fn adjoint_projection(variant: Variant, spec: &Spectrogram, win: &WindowPair) -> Result<Spectrogram> {
    match variant {
        Variant::Consistent if win.is_tight() => project_consistent(spec, win),
        Variant::Consistent => project_consistent(spec, &win.swapped()),
        Variant::Plain => Ok(spec.clone()),
    }
}

fn combine(a: f64, x: &DemixStack, b: f64, y: &DemixStack) -> DemixStack {
    DemixStack { matrices: &x.matrices * Complex64::from(a) + &y.matrices * Complex64::from(b) }
}

/// One iteration of the splitting scheme.
pub fn pds_step<M: SourceModel + ?Sized>(
    state: &SolverState,
    obs: &ObservationTensor,
    model: &M,
    cfg: &SolverConfig,
    win: &WindowPair,
) -> Result<SolverState> {
    let iteration = state.iteration + 1;
    let diverged = || BssError::Divergence { iteration };

    let dual = adjoint_projection(cfg.variant, &state.y, win)?;
    let grad = adjoint_correlate(obs, &dual)?;
    let w_tilde = prox_logdet(&combine(1.0, &state.w, -cfg.mu1 * cfg.mu2, &grad), cfg.mu1)
        .map_err(|e| match e {
            BssError::Svd(_) => diverged(),
            other => other,
        })?;

    let extrapolated = combine(2.0, &w_tilde, -1.0, &state.w);
    let mapped = forward_projection(cfg.variant, apply_demix(&extrapolated, obs)?, win)?;
    let z = state.y.with_data(&state.y.data + &mapped.data);
    let y_tilde = z.with_data(&z.data - &model.prox(&z, cfg.mu2).data);

    let a = cfg.alpha;
    let y = state.y.with_data(&y_tilde.data * Complex64::from(a) + &state.y.data * Complex64::from(1.0 - a));
    let w = combine(a, &w_tilde, 1.0 - a, &state.w);
    if !w.is_finite() || !y.is_finite() {
        return Err(diverged());
    }
    Ok(SolverState { w, y, iteration })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Penalty of the (projected, for the consistent variant) separated
    /// spectrogram plus the log-determinant term.
    pub objective: f64,
    /// Norm of the primal update that produced this iterate.
    pub primal_change: f64,
    /// Relative distance of the separated spectrogram from the consistent subspace.
    pub consistency_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    /// Factor the observation was multiplied by before solving.
    pub input_scale: f64,
}

impl Diagnostics {
    pub fn first(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn all_finite(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.objective.is_finite() && r.primal_change.is_finite() && r.consistency_residual.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,primal_change,consistency_residual\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.iteration, r.objective, r.primal_change, r.consistency_residual
            ));
        }
        out
    }
}

/// Objective of the chosen variant at `w`, and the consistency residual of
/// the separated spectrogram.
pub fn objective<M: SourceModel + ?Sized>(
    w: &DemixStack,
    obs: &ObservationTensor,
    model: &M,
    variant: Variant,
    win: &WindowPair,
) -> Result<(f64, f64)> {
    let separated = apply_demix(w, obs)?;
    let projected = project_consistent(&separated, win)?;
    let residual = separated.with_data(&separated.data - &projected.data).weighted_norm()
        / separated.weighted_norm().max(f64::MIN_POSITIVE);
    let penalty = match variant {
        Variant::Consistent => model.value(&projected),
        Variant::Plain => model.value(&separated),
    };
    Ok((penalty + logdet_penalty(w), residual))
}

/// Runs `cfg.iters` iterations from [`init_state`] and returns the final
/// demixing stack. When the solver worked on a normalized copy, applying the
/// stack to the observation as given undoes the normalization on the output.
pub fn run<M: SourceModel + ?Sized>(
    obs: &ObservationTensor,
    model: &M,
    cfg: &SolverConfig,
    win: &WindowPair,
) -> Result<(DemixStack, Diagnostics)> {
    cfg.validate()?;
    let scale = if cfg.normalize_input {
        let norm = operator_norm(obs);
        if norm > 0.0 {
            1.0 / norm
        } else {
            1.0
        }
    } else {
        1.0
    };
    let scaled;
    let obs = if scale != 1.0 {
        scaled = obs.scaled(scale);
        &scaled
    } else {
        obs
    };

    let mut diagnostics = Diagnostics { records: Vec::new(), input_scale: scale };
    let mut state = init_state(obs);
    let (obj, residual) = objective(&state.w, obs, model, cfg.variant, win)?;
    diagnostics.records.push(IterationRecord {
        iteration: 0,
        objective: obj,
        primal_change: 0.0,
        consistency_residual: residual,
    });

    for k in 1..=cfg.iters {
        let next = pds_step(&state, obs, model, cfg, win)?;
        let log = k == cfg.iters || (cfg.log_every > 0 && k % cfg.log_every == 0);
        if log {
            let change = combine(1.0, &next.w, -1.0, &state.w).norm();
            let (obj, residual) = objective(&next.w, obs, model, cfg.variant, win)?;
            if !obj.is_finite() {
                return Err(BssError::Divergence { iteration: k });
            }
            diagnostics.records.push(IterationRecord {
                iteration: k,
                objective: obj,
                primal_change: change,
                consistency_residual: residual,
            });
        }
        state = next;
    }
    Ok((state.w, diagnostics))
}

/// Result of the end-to-end pipeline.
#[derive(Debug, Clone)]
pub struct Separation {
    /// One output channel per estimated source, same length as the input.
    pub sources: TimeSignal,
    pub demix: DemixStack,
    /// Separated spectrogram on the padded grid.
    pub spectrogram: Spectrogram,
    pub diagnostics: Diagnostics,
}

/// Pads, transforms, solves, demixes and resynthesizes a multichannel mixture.
pub fn separate<M: SourceModel + ?Sized>(
    mixture: &TimeSignal,
    model: &M,
    cfg: &SolverConfig,
    win: &WindowPair,
) -> Result<Separation> {
    if mixture.channels() < 2 {
        return Err(BssError::Mono(mixture.channels()));
    }
    let len = mixture.len();
    let padded = mixture.zero_padded(win.padded_len(len));
    let obs = ObservationTensor::new(stft(&padded, win)?);
    let (demix, diagnostics) = run(&obs, model, cfg, win)?;
    let spectrogram = apply_demix(&demix, &obs)?;
    let sources = istft(&spectrogram, win, mixture.sample_rate)?.truncated(len);
    Ok(Separation { sources, demix, spectrogram, diagnostics })
}
