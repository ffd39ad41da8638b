//! Signal-to-distortion, -interference and -artifact ratios.
//!
//! An estimate is split into a target part (its projection onto delayed
//! copies of the assigned reference, delays `0..filter_len`), an interference
//! part (projection onto delayed copies of all references, minus the target)
//! and an artifact remainder. Delayed copies are truncated to the estimate
//! length, so the three parts add up to the estimate exactly.

use nalgebra::{DMatrix, DVector};
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::mixsim::{convolve_truncated, permutations};

/// Metric values are clamped to `[-METRIC_CAP_DB, METRIC_CAP_DB]`.
pub const METRIC_CAP_DB: f64 = 200.0;

/// Default allowed-distortion filter length for convolutive mixtures.
pub const DEFAULT_FILTER_LEN: usize = 512;

const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifact: Vec<f64>,
    /// A Gram system had to be regularized.
    pub regularized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    /// The target part vanished; all ratios are at the lower cap.
    #[serde(default)]
    pub zero_target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub estimate: usize,
    pub reference: usize,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// One entry per reference, in reference order.
    pub sources: Vec<SourceMetrics>,
    /// `assignment[i]` is the reference assigned to estimate `i`.
    pub assignment: Vec<usize>,
    /// Metrics minus the unprocessed-mixture baseline, per reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvements: Option<Vec<SourceMetrics>>,
    pub regularized: bool,
}

impl MetricsReport {
    pub fn mean_sir(&self) -> f64 {
        mean(self.sources.iter().map(|s| s.sir_db))
    }

    pub fn mean_sdr(&self) -> f64 {
        mean(self.sources.iter().map(|s| s.sdr_db))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return METRIC_CAP_DB;
    }
    if num <= 0.0 {
        return -METRIC_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

/// `out[d] = sum_{n >= d} r[n - d] e[n]` for `d < lags`.
fn correlate_lags(e: &[f64], r: &[f64], lags: usize) -> Vec<f64> {
    let len = e.len().max(r.len());
    let n = (len + lags).next_power_of_two();
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
    let es = spectrum(e);
    let rs = spectrum(r);
    let mut prod: Vec<_> = es.iter().zip(&rs).map(|(a, b)| a * b.conj()).collect();
    let last = prod.len() - 1;
    prod[0].im = 0.0;
    prod[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut prod, &mut out).expect("buffer sizes match plan");
    out.truncate(lags);
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}

struct Projector {
    /// References spanned, in column-block order.
    refs: Vec<usize>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    regularized: bool,
}

/// Precomputed Gram factorizations for a fixed set of references.
pub struct Evaluator {
    references: Vec<Vec<f64>>,
    filter_len: usize,
    all: Projector,
    single: Vec<Projector>,
}

impl Evaluator {
    pub fn new(references: &[Vec<f64>], filter_len: usize) -> Result<Self> {
        if filter_len == 0 {
            return Err(BssError::Config("filter length must be at least 1".into()));
        }
        let len = references.first().map_or(0, Vec::len);
        if references.is_empty() || len == 0 || references.iter().any(|r| r.len() != len) {
            return Err(BssError::Dimension("references must be non-empty and equally long".into()));
        }
        if filter_len > len {
            return Err(BssError::Config(format!(
                "filter length {filter_len} exceeds signal length {len}"
            )));
        }
        let references = references.to_vec();
        let gram = full_gram(&references, filter_len);
        let all = Projector::new((0..references.len()).collect(), &gram, filter_len);
        let single = (0..references.len())
            .map(|i| Projector::new(vec![i], &gram, filter_len))
            .collect();
        Ok(Evaluator { references, filter_len, all, single })
    }

    pub fn num_references(&self) -> usize {
        self.references.len()
    }

    fn project(&self, p: &Projector, estimate: &[f64]) -> Vec<f64> {
        let l = self.filter_len;
        let mut rhs = DVector::zeros(p.refs.len() * l);
        for (k, &i) in p.refs.iter().enumerate() {
            let c = correlate_lags(estimate, &self.references[i], l);
            rhs.rows_mut(k * l, l).copy_from_slice(&c);
        }
        let coef = p.factor.solve(&rhs);
        let mut out = vec![0.0; estimate.len()];
        for (k, &i) in p.refs.iter().enumerate() {
            let filt: Vec<f64> = coef.rows(k * l, l).iter().copied().collect();
            let part = convolve_truncated(&self.references[i], &filt);
            out.iter_mut().zip(part).for_each(|(o, v)| *o += v);
        }
        out
    }

    fn check_estimate(&self, estimate: &[f64]) -> Result<()> {
        if estimate.len() != self.references[0].len() {
            return Err(BssError::Dimension(format!(
                "estimate has {} samples, references {}",
                estimate.len(),
                self.references[0].len()
            )));
        }
        Ok(())
    }

    /// Decomposes `estimate` with respect to reference `assigned`.
    pub fn decompose(&self, estimate: &[f64], assigned: usize) -> Result<Decomposition> {
        self.check_estimate(estimate)?;
        let single = self.single.get(assigned).ok_or_else(|| {
            BssError::Dimension(format!("reference {assigned} out of range"))
        })?;
        let target = self.project(single, estimate);
        let spanned = self.project(&self.all, estimate);
        Ok(split(estimate, target, spanned, single.regularized || self.all.regularized))
    }

    /// Metrics of estimate `i` against every reference: `out[j]` uses reference `j`.
    fn metrics_against_all(&self, estimate: &[f64]) -> Result<(Vec<Metrics>, bool)> {
        self.check_estimate(estimate)?;
        let spanned = self.project(&self.all, estimate);
        let mut regularized = self.all.regularized;
        let mut out = Vec::with_capacity(self.single.len());
        for p in &self.single {
            regularized |= p.regularized;
            let target = self.project(p, estimate);
            out.push(sdr_sir_sar(&split(estimate, target, spanned.clone(), false)));
        }
        Ok((out, regularized))
    }

    /// Best assignment and per-source metrics for a set of estimates.
    pub fn evaluate(&self, estimates: &[Vec<f64>]) -> Result<MetricsReport> {
        let m = self.references.len();
        if estimates.len() != m {
            return Err(BssError::Dimension(format!(
                "{} estimates for {m} references",
                estimates.len()
            )));
        }
        if m > 4 {
            return Err(BssError::TooManySources(m));
        }
        let mut table = Vec::with_capacity(m);
        let mut regularized = false;
        for e in estimates {
            let (row, reg) = self.metrics_against_all(e)?;
            regularized |= reg;
            table.push(row);
        }
        let assignment = best_assignment(&table);
        let mut sources: Vec<SourceMetrics> = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| SourceMetrics {
                estimate: i,
                reference: j,
                sdr_db: table[i][j].sdr_db,
                sir_db: table[i][j].sir_db,
                sar_db: table[i][j].sar_db,
            })
            .collect();
        sources.sort_by_key(|s| s.reference);
        Ok(MetricsReport { sources, assignment, improvements: None, regularized })
    }
}

fn split(estimate: &[f64], target: Vec<f64>, spanned: Vec<f64>, regularized: bool) -> Decomposition {
    let interference = spanned.iter().zip(&target).map(|(s, t)| s - t).collect();
    let artifact = estimate.iter().zip(&spanned).map(|(e, s)| e - s).collect();
    Decomposition { target, interference, artifact, regularized }
}

impl Projector {
    fn new(refs: Vec<usize>, gram: &DMatrix<f64>, l: usize) -> Self {
        let size = refs.len() * l;
        let mut g = DMatrix::zeros(size, size);
        for (a, &i) in refs.iter().enumerate() {
            for (b, &j) in refs.iter().enumerate() {
                g.view_mut((a * l, b * l), (l, l))
                    .copy_from(&gram.view((i * l, j * l), (l, l)));
            }
        }
        if let Some(factor) = g.clone().cholesky() {
            return Projector { refs, factor, regularized: false };
        }
        let ridge = RIDGE * g.trace().max(f64::MIN_POSITIVE);
        let mut boosted = g;
        for k in 0..size {
            boosted[(k, k)] += ridge;
        }
        let factor = boosted
            .cholesky()
            .expect("ridge-regularized Gram matrix is positive definite");
        Projector { refs, factor, regularized: true }
    }
}

/// Gram matrix of all truncated delayed reference copies; block `(i, j)` is
/// `l x l` and entry `(d1, d2)` is `sum_{n >= max(d1, d2)} r_i[n - d1] r_j[n - d2]`.
fn full_gram(refs: &[Vec<f64>], l: usize) -> DMatrix<f64> {
    let m = refs.len();
    let len = refs[0].len();
    let mut g = DMatrix::zeros(m * l, m * l);
    for i in 0..m {
        for j in 0..m {
            // First row: d1 = 0; first column: d2 = 0.
            let row0 = correlate_lags(&refs[i], &refs[j], l);
            let col0 = correlate_lags(&refs[j], &refs[i], l);
            let mut block = DMatrix::zeros(l, l);
            for d in 0..l {
                block[(0, d)] = row0[d];
                block[(d, 0)] = col0[d];
            }
            for d1 in 1..l {
                for d2 in 1..l {
                    block[(d1, d2)] =
                        block[(d1 - 1, d2 - 1)] - refs[i][len - d1] * refs[j][len - d2];
                }
            }
            g.view_mut((i * l, j * l), (l, l)).copy_from(&block);
        }
    }
    g
}

fn best_assignment(table: &[Vec<Metrics>]) -> Vec<usize> {
    let m = table.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in permutations(m) {
        let score = mean(p.iter().enumerate().map(|(i, &j)| table[i][j].sir_db));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, p));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

/// Decomposition of `estimate` against `references[assigned]`.
pub fn decompose(
    estimate: &[f64],
    references: &[Vec<f64>],
    assigned: usize,
    filter_len: usize,
) -> Result<Decomposition> {
    Evaluator::new(references, filter_len)?.decompose(estimate, assigned)
}

pub fn sdr_sir_sar(d: &Decomposition) -> Metrics {
    let target = energy(&d.target);
    let interf = energy(&d.interference);
    let artif = energy(&d.artifact);
    let noise: Vec<f64> = d.interference.iter().zip(&d.artifact).map(|(a, b)| a + b).collect();
    let signal: Vec<f64> = d.target.iter().zip(&d.interference).map(|(a, b)| a + b).collect();
    if target <= 0.0 {
        return Metrics {
            sdr_db: -METRIC_CAP_DB,
            sir_db: -METRIC_CAP_DB,
            sar_db: -METRIC_CAP_DB,
            zero_target: true,
        };
    }
    Metrics {
        sdr_db: ratio_db(target, energy(&noise)),
        sir_db: ratio_db(target, interf),
        sar_db: ratio_db(energy(&signal), artif),
        zero_target: false,
    }
}

/// Assignment maximizing the mean SIR over all `M!` candidates.
pub fn best_permutation_align(
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
    filter_len: usize,
) -> Result<Vec<usize>> {
    if references.len() > 4 {
        return Err(BssError::TooManySources(references.len()));
    }
    Ok(Evaluator::new(references, filter_len)?.evaluate(estimates)?.assignment)
}

/// Full report for `estimates` against `references`.
pub fn evaluate(
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
    filter_len: usize,
) -> Result<MetricsReport> {
    if references.len() > 4 {
        return Err(BssError::TooManySources(references.len()));
    }
    Evaluator::new(references, filter_len)?.evaluate(estimates)
}

/// `report_est` with improvements over `report_mix` filled in. Capped values
/// are subtracted as they are.
pub fn improvement(report_est: &MetricsReport, report_mix: &MetricsReport) -> Result<MetricsReport> {
    if report_est.sources.len() != report_mix.sources.len() {
        return Err(BssError::Dimension("reports cover different numbers of sources".into()));
    }
    let diffs = report_est
        .sources
        .iter()
        .zip(&report_mix.sources)
        .map(|(e, m)| {
            if e.reference != m.reference {
                return Err(BssError::Dimension("reports are not aligned by reference".into()));
            }
            Ok(SourceMetrics {
                estimate: e.estimate,
                reference: e.reference,
                sdr_db: e.sdr_db - m.sdr_db,
                sir_db: e.sir_db - m.sir_db,
                sar_db: e.sar_db - m.sar_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { improvements: Some(diffs), ..report_est.clone() })
}
