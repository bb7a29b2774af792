//! Quality measures for counterfactual sets and the nearest-unlike-neighbour
//! baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledSeries, TimeSeries};
use crate::descriptors::max_gradient;
use crate::error::{Error, Result};
use crate::nsga3::CfeArchive;
use crate::objectives::TargetSpec;
use crate::regressors::Regressor;
use crate::signal::{dft_magnitudes, dtw, nearest_by_dtw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Neighbourhood size for plausibility.
    pub k: usize,
    pub n_bins: usize,
    pub eps: f64,
    /// Absolute tolerance of the edit mask.
    pub atol: f64,
    pub band: Option<usize>,
    /// Cap on archive members scored by the per-member metrics; validity
    /// and diversity always cover the whole archive.
    #[serde(default)]
    pub max_members: Option<usize>,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            k: 5,
            n_bins: 50,
            eps: 1e-10,
            atol: 1e-9,
            band: None,
            max_members: None,
        }
    }
}

fn same_len(x: &TimeSeries, xp: &TimeSeries) -> Result<()> {
    if x.len() != xp.len() {
        return Err(Error::arg(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            xp.len()
        )));
    }
    Ok(())
}

/// Fraction of predictions inside the target interval.
pub fn validity(preds: &[f64], target: &TargetSpec) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::arg("validity of an empty prediction set"));
    }
    Ok(preds.iter().filter(|&&p| target.contains(p)).count() as f64 / preds.len() as f64)
}

/// Share of the `k` DTW-nearest training series whose label lies within
/// `delta` of `yhat`.
pub fn plausibility(
    xp: &TimeSeries,
    yhat: f64,
    train: &Dataset,
    k: usize,
    delta: f64,
    band: Option<usize>,
) -> Result<f64> {
    if k == 0 || k > train.len() {
        return Err(Error::arg(format!(
            "k must lie in 1..={}, got {k}",
            train.len()
        )));
    }
    let items = train.items();
    let nn = nearest_by_dtw(
        xp.values(),
        items.iter().enumerate().map(|(i, it)| (i, it.series.values())),
        k,
        band,
    )?;
    let hits = nn
        .iter()
        .filter(|&&(i, _)| (items[i].label - yhat).abs() <= delta)
        .count();
    Ok(hits as f64 / k as f64)
}

/// DTW cost per sample.
pub fn proximity(x: &TimeSeries, xp: &TimeSeries, band: Option<usize>) -> Result<f64> {
    same_len(x, xp)?;
    Ok(dtw(x.values(), xp.values(), band)? / x.len() as f64)
}

fn edit_mask(x: &TimeSeries, xp: &TimeSeries, atol: f64) -> Result<Vec<bool>> {
    same_len(x, xp)?;
    Ok(x.values()
        .iter()
        .zip(xp.values())
        .map(|(a, b)| (a - b).abs() > atol)
        .collect())
}

/// Number of contiguous edited segments.
pub fn temporal_sparsity(x: &TimeSeries, xp: &TimeSeries, atol: f64) -> Result<usize> {
    let mask = edit_mask(x, xp, atol)?;
    let mut prev = false;
    let mut edges = 0;
    for m in mask {
        if m && !prev {
            edges += 1;
        }
        prev = m;
    }
    Ok(edges)
}

/// Fraction of samples that differ by more than `atol`.
pub fn temporal_sparsity_fraction(x: &TimeSeries, xp: &TimeSeries, atol: f64) -> Result<f64> {
    let mask = edit_mask(x, xp, atol)?;
    Ok(mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64)
}

/// `sum p ln(p / q)` over matching bins.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

/// Normalised histograms of two magnitude sets over their shared range, with
/// `eps` added to every bin.
pub fn magnitude_histograms(a: &[f64], b: &[f64], n_bins: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let hist = |v: &[f64]| {
        let mut h = vec![eps; n_bins];
        for &m in v {
            let bin = if width > 0.0 {
                (((m - lo) / width) as usize).min(n_bins - 1)
            } else {
                0
            };
            h[bin] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.iter_mut().for_each(|c| *c /= total);
        h
    };
    (hist(a), hist(b))
}

/// KL divergence (nats) between the magnitude-level distributions of the
/// demeaned one-sided spectra of `x` and `xp`.
pub fn frequency_sparsity(x: &TimeSeries, xp: &TimeSeries, n_bins: usize, eps: f64) -> Result<f64> {
    same_len(x, xp)?;
    if n_bins < 2 {
        return Err(Error::arg("n_bins must be at least 2"));
    }
    let sx = dft_magnitudes(x, true).magnitudes;
    let sp = dft_magnitudes(xp, true).magnitudes;
    let (hx, hp) = magnitude_histograms(&sx, &sp, n_bins, eps);
    Ok(kl_divergence(&hx, &hp).max(0.0))
}

/// Training instance with label inside the target interval that is closest
/// to `x` under DTW; ties go to the lower index.
pub fn nun_baseline(
    x: &TimeSeries,
    target: &TargetSpec,
    train: &Dataset,
    band: Option<usize>,
) -> Result<LabeledSeries> {
    let items = train.items();
    let nn = nearest_by_dtw(
        x.values(),
        items
            .iter()
            .enumerate()
            .filter(|(_, it)| target.contains(it.label))
            .map(|(i, it)| (i, it.series.values())),
        1,
        band,
    )?;
    match nn.first() {
        Some(&(i, _)) => Ok(items[i].clone()),
        None => Err(Error::NotFound(format!(
            "no training label in [{}, {}]",
            target.lower(),
            target.upper()
        ))),
    }
}

/// Per-instance summary; averaged fields are `None` when there is nothing to
/// average over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub validity: Option<f64>,
    pub plausibility: Option<f64>,
    pub proximity: Option<f64>,
    pub temporal_segments: Option<f64>,
    pub temporal_fraction: Option<f64>,
    pub frequency_sparsity: Option<f64>,
    pub max_gradient: Option<f64>,
    /// Deduplicated archive size.
    pub diversity: usize,
    /// Size of the final non-dominated front, an alternative diversity count.
    pub front_size: usize,
}

impl EvalReport {
    pub fn empty() -> Self {
        Self {
            validity: None,
            plausibility: None,
            proximity: None,
            temporal_segments: None,
            temporal_fraction: None,
            frequency_sparsity: None,
            max_gradient: None,
            diversity: 0,
            front_size: 0,
        }
    }
}

/// Metrics of one counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub prediction: f64,
    pub valid: bool,
    pub plausibility: f64,
    pub proximity: f64,
    pub temporal_segments: usize,
    pub temporal_fraction: f64,
    pub frequency_sparsity: f64,
    pub max_gradient: f64,
}

pub fn member_metrics(
    x: &TimeSeries,
    xp: &TimeSeries,
    target: &TargetSpec,
    train: &Dataset,
    regressor: &dyn Regressor,
    params: &MetricParams,
) -> Result<MemberMetrics> {
    let prediction = regressor.predict(xp)?;
    Ok(MemberMetrics {
        prediction,
        valid: target.contains(prediction),
        plausibility: plausibility(xp, prediction, train, params.k, target.tolerance, params.band)?,
        proximity: proximity(x, xp, params.band)?,
        temporal_segments: temporal_sparsity(x, xp, params.atol)?,
        temporal_fraction: temporal_sparsity_fraction(x, xp, params.atol)?,
        frequency_sparsity: frequency_sparsity(x, xp, params.n_bins, params.eps)?,
        max_gradient: max_gradient(xp),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Folds member metrics into a report with the given diversity.
pub fn aggregate(members: &[MemberMetrics], diversity: usize) -> EvalReport {
    if members.is_empty() {
        return EvalReport {
            diversity,
            ..EvalReport::empty()
        };
    }
    EvalReport {
        validity: Some(mean(members.iter().map(|m| m.valid as u8 as f64))),
        plausibility: Some(mean(members.iter().map(|m| m.plausibility))),
        proximity: Some(mean(members.iter().map(|m| m.proximity))),
        temporal_segments: Some(mean(members.iter().map(|m| m.temporal_segments as f64))),
        temporal_fraction: Some(mean(members.iter().map(|m| m.temporal_fraction))),
        frequency_sparsity: Some(mean(members.iter().map(|m| m.frequency_sparsity))),
        max_gradient: Some(mean(members.iter().map(|m| m.max_gradient))),
        diversity,
        front_size: 0,
    }
}

/// Positions of `m` members spread evenly over `n`, or all of them.
pub fn strided_subset(n: usize, m: Option<usize>) -> Vec<usize> {
    match m {
        Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

/// Scores the archived counterfactuals of `x`. Diversity is the archive size
/// and validity re-predicts every member; the remaining metrics average over
/// [`strided_subset`] of the archive. Returns the report and the per-member
/// detail of the scored members.
pub fn evaluate_cfe_set(
    x: &TimeSeries,
    target: &TargetSpec,
    archive: &CfeArchive,
    train: &Dataset,
    regressor: &dyn Regressor,
    params: &MetricParams,
) -> Result<(EvalReport, Vec<MemberMetrics>)> {
    let all = &archive.all_feasible;
    let scored = strided_subset(all.len(), params.max_members);
    let members: Vec<MemberMetrics> = scored
        .par_iter()
        .map(|&i| {
            member_metrics(x, &all[i].waveform, target, train, regressor, params)
                .map_err(|e| e.context(format!("archive member {i}")))
        })
        .collect::<Result<_>>()?;
    let mut report = aggregate(&members, archive.len());
    if scored.len() < all.len() {
        let preds: Vec<f64> = all
            .par_iter()
            .map(|c| regressor.predict(&c.waveform))
            .collect::<Result<_>>()?;
        report.validity = Some(validity(&preds, target)?);
    }
    report.front_size = archive.final_front.len();
    Ok((report, members))
}

/// Scores a nearest-unlike neighbour. Diversity is 0 by construction.
pub fn evaluate_nun(
    x: &TimeSeries,
    target: &TargetSpec,
    nun: &TimeSeries,
    train: &Dataset,
    regressor: &dyn Regressor,
    params: &MetricParams,
) -> Result<(EvalReport, MemberMetrics)> {
    let m = member_metrics(x, nun, target, train, regressor, params)?;
    Ok((aggregate(std::slice::from_ref(&m), 0), m))
}
