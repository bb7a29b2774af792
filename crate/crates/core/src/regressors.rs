//! The black-box regressor contract and the desk-scale models behind it.
//!
//! A [`Regressor`] maps a whole series to one scalar. Implementations must be
//! deterministic and safe to call from several threads at once; the search
//! never looks inside them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{bootstrap_indices, bootstrap_resample, Dataset, TimeSeries};
use crate::descriptors::{dominant_frequency, profile};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::signal::{check_dtw_args, dtw_bounded, dtw_lower_bounds, nearest_by_dtw, Envelope};

pub trait Regressor: Send + Sync {
    fn predict(&self, x: &TimeSeries) -> Result<f64>;
}

impl<R: Regressor + ?Sized> Regressor for Box<R> {
    fn predict(&self, x: &TimeSeries) -> Result<f64> {
        (**self).predict(x)
    }
}

impl<R: Regressor + ?Sized> Regressor for std::sync::Arc<R> {
    fn predict(&self, x: &TimeSeries) -> Result<f64> {
        (**self).predict(x)
    }
}

/// `scale * dominant_frequency(x)`; with `scale = 60` this reads a heart rate
/// in bpm straight off the spectrum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralRateRegressor {
    pub scale: f64,
}

impl SpectralRateRegressor {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::arg("spectral regressor scale must be positive"));
        }
        Ok(Self { scale })
    }
}

impl Regressor for SpectralRateRegressor {
    fn predict(&self, x: &TimeSeries) -> Result<f64> {
        Ok(self.scale * dominant_frequency(x))
    }
}

/// Mean label of the `k` DTW-nearest training series.
#[derive(Debug, Clone)]
pub struct KnnDtwRegressor {
    train: Dataset,
    k: usize,
    band: Option<usize>,
}

impl KnnDtwRegressor {
    pub fn new(train: Dataset, k: usize, band: Option<usize>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::arg("k-NN regressor needs training data"));
        }
        if k == 0 || k > train.len() {
            return Err(Error::arg(format!("k = {k} must lie in [1, {}]", train.len())));
        }
        Ok(Self { train, k, band })
    }
}

impl Regressor for KnnDtwRegressor {
    fn predict(&self, x: &TimeSeries) -> Result<f64> {
        let items = self.train.items();
        let nn = nearest_by_dtw(
            x.values(),
            items.iter().enumerate().map(|(i, it)| (i, it.series.values())),
            self.k,
            self.band,
        )?;
        Ok(nn.iter().map(|&(i, _)| items[i].label).sum::<f64>() / nn.len() as f64)
    }
}

/// Ridge regression of the label on the standardised five-descriptor profile.
/// The intercept is not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeDescriptorRegressor {
    pub feature_means: [f64; 5],
    pub feature_scales: [f64; 5],
    pub coefficients: [f64; 5],
    pub intercept: f64,
    pub ridge_lambda: f64,
}

impl RidgeDescriptorRegressor {
    pub fn fit(train: &Dataset, ridge_lambda: f64) -> Result<Self> {
        let features: Vec<[f64; 5]> = train
            .items()
            .iter()
            .map(|it| profile(&it.series).to_array())
            .collect();
        Self::fit_features(&features, &train.labels(), ridge_lambda)
    }

    pub fn fit_features(features: &[[f64; 5]], labels: &[f64], ridge_lambda: f64) -> Result<Self> {
        let n = features.len();
        if n < 6 {
            return Err(Error::arg(format!("ridge fit needs at least 6 examples, got {n}")));
        }
        if labels.len() != n {
            return Err(Error::arg("feature and label counts differ"));
        }
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::arg("ridge lambda must be non-negative"));
        }
        let mut means = [0.0; 5];
        let mut scales = [1.0; 5];
        for j in 0..5 {
            let m = features.iter().map(|f| f[j]).sum::<f64>() / n as f64;
            let var = features.iter().map(|f| (f[j] - m).powi(2)).sum::<f64>() / n as f64;
            means[j] = m;
            // Constant features standardise to zero and drop out of the fit.
            scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let y_mean = labels.iter().sum::<f64>() / n as f64;
        let z = DMatrix::from_fn(n, 5, |i, j| (features[i][j] - means[j]) / scales[j]);
        let yc = DVector::from_iterator(n, labels.iter().map(|y| y - y_mean));
        let mut gram = z.transpose() * &z;
        for j in 0..5 {
            gram[(j, j)] += ridge_lambda;
        }
        let rhs = z.transpose() * yc;
        let beta = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "normal equations are singular (lambda = {ridge_lambda})"
                ))
            })?;
        let mut coefficients = [0.0; 5];
        coefficients.copy_from_slice(beta.as_slice());
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("ridge solution is not finite".into()));
        }
        Ok(Self {
            feature_means: means,
            feature_scales: scales,
            coefficients,
            intercept: y_mean,
            ridge_lambda,
        })
    }

    pub fn predict_features(&self, f: &[f64; 5]) -> f64 {
        self.intercept
            + (0..5)
                .map(|j| self.coefficients[j] * (f[j] - self.feature_means[j]) / self.feature_scales[j])
                .sum::<f64>()
    }
}

impl Regressor for RidgeDescriptorRegressor {
    fn predict(&self, x: &TimeSeries) -> Result<f64> {
        Ok(self.predict_features(&profile(x).to_array()))
    }
}

/// Bootstrap replicates of one base model.
pub struct Ensemble {
    members: Vec<Box<dyn Regressor>>,
}

impl Ensemble {
    pub fn from_members(members: Vec<Box<dyn Regressor>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::arg("an ensemble needs at least 2 members"));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Box<dyn Regressor>] {
        &self.members
    }

    /// One prediction per member, in member order.
    pub fn predict_all(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        self.members.iter().map(|m| m.predict(x)).collect()
    }
}

/// Anything that returns one prediction per replicate.
pub trait EnsemblePredictor: Send + Sync {
    fn predict_all(&self, x: &TimeSeries) -> Result<Vec<f64>>;
    fn n_members(&self) -> usize;
}

impl EnsemblePredictor for Ensemble {
    fn predict_all(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        Ensemble::predict_all(self, x)
    }

    fn n_members(&self) -> usize {
        self.len()
    }
}

/// Bootstrap replicates of [`KnnDtwRegressor`] over one shared training set.
///
/// Each replicate is a multiset of training indices. A query computes each
/// needed DTW distance once and reuses it for every replicate. Exact distance
/// ties are broken by training index.
#[derive(Debug, Clone)]
pub struct KnnBootstrapEnsemble {
    train: Dataset,
    /// Per replicate, the multiplicity of every training index.
    counts: Vec<Vec<u32>>,
    k: usize,
    band: Option<usize>,
}

impl KnnBootstrapEnsemble {
    /// Draws replicate `b` with the same seed stream as
    /// [`fit_bootstrap_ensemble`].
    pub fn fit(train: Dataset, n_boot: usize, k: usize, band: Option<usize>, seed: u64) -> Result<Self> {
        if n_boot < 2 {
            return Err(Error::arg("n_boot must be at least 2"));
        }
        KnnDtwRegressor::new(train.clone(), k, band)?;
        let n = train.len();
        let counts = (0..n_boot)
            .map(|b| {
                let mut c = vec![0u32; n];
                for i in bootstrap_indices(n, derive_seed(seed, "bootstrap", b as u64)) {
                    c[i] += 1;
                }
                c
            })
            .collect();
        Ok(Self {
            train,
            counts,
            k,
            band,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// k-th smallest distance among `known` for one replicate, counting
    /// duplicates; infinite while fewer than `k` are known.
    fn kth(&self, counts: &[u32], known: &[(usize, f64)]) -> f64 {
        let mut taken = 0usize;
        for &(i, d) in known {
            taken += counts[i] as usize;
            if taken >= self.k {
                return d;
            }
        }
        f64::INFINITY
    }
}

impl EnsemblePredictor for KnnBootstrapEnsemble {
    fn predict_all(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        let q = x.values();
        let items = self.train.items();
        let slices: Vec<&[f64]> = items.iter().map(|it| it.series.values()).collect();
        for c in &slices {
            check_dtw_args(q, c, self.band)?;
        }
        let env = Envelope::new(q, self.band);
        let bounds = dtw_lower_bounds(q, &env, &slices);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| bounds[a].total_cmp(&bounds[b]).then(a.cmp(&b)));

        // Exact distances found so far, kept sorted by (distance, index).
        let mut known: Vec<(usize, f64)> = Vec::new();
        for i in order {
            let cutoff = self
                .counts
                .iter()
                .map(|c| self.kth(c, &known))
                .fold(0.0, f64::max);
            if bounds[i] > cutoff {
                break;
            }
            if let Some(d) = dtw_bounded(q, slices[i], self.band, cutoff) {
                let at = known
                    .iter()
                    .position(|&(bi, bd)| d < bd || (d == bd && i < bi))
                    .unwrap_or(known.len());
                known.insert(at, (i, d));
            }
        }
        Ok(self
            .counts
            .iter()
            .map(|c| {
                let mut left = self.k;
                let mut total = 0.0;
                for &(i, _) in &known {
                    let take = (c[i] as usize).min(left);
                    total += take as f64 * items[i].label;
                    left -= take;
                    if left == 0 {
                        break;
                    }
                }
                total / self.k as f64
            })
            .collect())
    }

    fn n_members(&self) -> usize {
        self.len()
    }
}

/// Fits `n_boot` models, each on its own resample of `train` with replacement.
pub fn fit_bootstrap_ensemble<F>(train: &Dataset, n_boot: usize, base: F, seed: u64) -> Result<Ensemble>
where
    F: Fn(&Dataset) -> Result<Box<dyn Regressor>> + Sync,
{
    use rayon::prelude::*;
    if n_boot < 2 {
        return Err(Error::arg("n_boot must be at least 2"));
    }
    let members = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let sample = bootstrap_resample(train, derive_seed(seed, "bootstrap", b as u64))?;
            base(&sample).map_err(|e| e.context(format!("fitting bootstrap member {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_members(members)
}
