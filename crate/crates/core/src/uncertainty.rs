//! Uncertainty probes: bootstrap interval widths, counterfactual dispersion
//! and descriptor-space density, summarised per label bin.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::descriptors::profile;
use crate::error::{Error, Result};
use crate::nsga3::CfeArchive;
use crate::regressors::EnsemblePredictor;
use crate::signal::percentile;

/// Width of the central `level` interval of `preds`.
pub fn central_interval_width(preds: &[f64], level: f64) -> Result<f64> {
    if preds.len() < 2 {
        return Err(Error::arg("an interval needs at least two predictions"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("level must lie in (0, 1), got {level}")));
    }
    let hi = percentile(preds, (1.0 + level) / 2.0 * 100.0)?;
    let lo = percentile(preds, (1.0 - level) / 2.0 * 100.0)?;
    Ok(hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub ci_width: f64,
    pub variance: f64,
}

/// Summary statistics of a pooled prediction sample. `None` when empty; the
/// interval width is 0 for a single value.
pub fn dispersion_of(pooled: &[f64]) -> Option<Dispersion> {
    if pooled.is_empty() {
        return None;
    }
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let variance = pooled.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let ci_width = central_interval_width(pooled, 0.95).unwrap_or(0.0);
    Some(Dispersion {
        mean,
        ci_width,
        variance,
    })
}

/// Pools every ensemble member's prediction on every archived counterfactual.
pub fn cfe_dispersion(archive: &CfeArchive, ensemble: &dyn EnsemblePredictor) -> Result<Option<Dispersion>> {
    let mut pooled = Vec::with_capacity(archive.len() * ensemble.n_members());
    for c in &archive.all_feasible {
        pooled.extend(ensemble.predict_all(&c.waveform)?);
    }
    Ok(dispersion_of(&pooled))
}

/// Per-dimension z-scoring fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(Error::arg("cannot standardize an empty feature set"));
        };
        let d = first.len();
        let n = features.len() as f64;
        let means: Vec<f64> = (0..d)
            .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n)
            .collect();
        let scales = (0..d)
            .map(|j| {
                let var = features.iter().map(|f| (f[j] - means[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, scales })
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Scott's rule `n^(-1/(d+4))` for standardised features.
pub fn scott_bandwidth(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Negative log density of `query` under an isotropic Gaussian KDE.
pub fn kde_nll(train: &[Vec<f64>], query: &[f64], bandwidth: f64) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::arg("KDE needs at least one training point"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::arg(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(nll_excluding(train, None, query, bandwidth))
}

fn nll_excluding(train: &[Vec<f64>], skip: Option<usize>, query: &[f64], h: f64) -> f64 {
    let d = query.len() as f64;
    let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - d * h.ln();
    let logs: Vec<f64> = train
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != skip)
        .map(|(_, t)| {
            let sq: f64 = t.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
            log_norm - 0.5 * sq / (h * h)
        })
        .collect();
    // log-sum-exp keeps far queries finite.
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    -(lse - (logs.len() as f64).ln())
}

/// Bandwidth from `grid` maximising the leave-one-out log-likelihood of
/// `points`; the smallest such value on ties.
pub fn loo_bandwidth(points: &[Vec<f64>], grid: &[f64]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::arg("leave-one-out bandwidth needs at least two points"));
    }
    if grid.is_empty() || grid.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::arg("bandwidth grid must be non-empty and positive"));
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &h in grid {
        let total: f64 = (0..points.len())
            .map(|i| nll_excluding(points, Some(i), &points[i], h))
            .sum();
        if total < best.0 {
            best = (total, h);
        }
    }
    Ok(best.1)
}

/// Log-spaced grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// How [`DescriptorKde`] picks its kernel width, in z-score units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Scott,
    /// Leave-one-out likelihood over a log grid on `[0.05, 2]`.
    LeaveOneOut,
    Fixed(f64),
}

/// Descriptor-space density model of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorKde {
    pub standardizer: Standardizer,
    pub points: Vec<Vec<f64>>,
    pub bandwidth: f64,
}

impl DescriptorKde {
    /// Fits on the property profiles of `train`.
    pub fn fit(train: &Dataset, bandwidth: Bandwidth) -> Result<Self> {
        let raw: Vec<Vec<f64>> = train
            .items()
            .iter()
            .map(|it| profile(&it.series).to_array().to_vec())
            .collect();
        let standardizer = Standardizer::fit(&raw)?;
        let points: Vec<Vec<f64>> = raw.iter().map(|f| standardizer.apply(f)).collect();
        let bandwidth = match bandwidth {
            Bandwidth::Scott => scott_bandwidth(points.len(), 5),
            Bandwidth::LeaveOneOut => loo_bandwidth(&points, &log_grid(0.05, 2.0, 33))?,
            Bandwidth::Fixed(h) if h > 0.0 => h,
            Bandwidth::Fixed(h) => return Err(Error::arg(format!("bandwidth must be positive, got {h}"))),
        };
        Ok(Self {
            standardizer,
            points,
            bandwidth,
        })
    }

    pub fn nll(&self, x: &crate::dataset::TimeSeries) -> Result<f64> {
        let q = self.standardizer.apply(&profile(x).to_array());
        kde_nll(&self.points, &q, self.bandwidth)
    }
}

/// Per-instance inputs to the bin summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceUncertainty {
    pub label: f64,
    pub bootstrap_ci_width: f64,
    pub cfe: Option<Dispersion>,
    pub kde_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub mean_label: Option<f64>,
    pub mean_bootstrap_ci_width: Option<f64>,
    pub mean_cfe_ci_width: Option<f64>,
    pub mean_kde_nll: Option<f64>,
    pub mean_cfe_variance: Option<f64>,
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row per `[edges[i], edges[i+1])`, instances assigned by label.
/// Counterfactual means skip instances with an empty archive.
pub fn bin_report(instances: &[InstanceUncertainty], edges: &[f64]) -> Result<Vec<BinReport>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::arg("bin edges must be strictly increasing with at least two entries"));
    }
    Ok(edges
        .windows(2)
        .map(|w| {
            let inside: Vec<&InstanceUncertainty> = instances
                .iter()
                .filter(|s| s.label >= w[0] && s.label < w[1])
                .collect();
            let col = |f: &dyn Fn(&InstanceUncertainty) -> Option<f64>| {
                mean_of(&inside.iter().filter_map(|s| f(s)).collect::<Vec<_>>())
            };
            BinReport {
                lower: w[0],
                upper: w[1],
                n: inside.len(),
                mean_label: col(&|s| Some(s.label)),
                mean_bootstrap_ci_width: col(&|s| Some(s.bootstrap_ci_width)),
                mean_cfe_ci_width: col(&|s| s.cfe.map(|c| c.ci_width)),
                mean_kde_nll: col(&|s| Some(s.kde_nll)),
                mean_cfe_variance: col(&|s| s.cfe.map(|c| c.variance)),
            }
        })
        .collect())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or fewer than two pairs are given.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}
