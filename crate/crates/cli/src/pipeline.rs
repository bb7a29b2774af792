//! In-memory experiment pipelines. Nothing here touches the output directory.

use anyhow::{bail, Context};
use morphcf::dataset::{parse_ts_dataset, sample_indices, synth_dataset, Dataset, TsReadOptions};
use morphcf::metrics::{evaluate_cfe_set, evaluate_nun, nun_baseline, EvalReport, MemberMetrics};
use morphcf::operators::build_reference_set;
use morphcf::regressors::{
    fit_bootstrap_ensemble, KnnBootstrapEnsemble, KnnDtwRegressor, Regressor, RidgeDescriptorRegressor,
    SpectralRateRegressor,
};
use morphcf::rng::derive_seed;
use morphcf::uncertainty::{
    bin_report, central_interval_width, cfe_dispersion, BinReport, DescriptorKde, InstanceUncertainty,
};
use morphcf::{run, CfeArchive, EnsemblePredictor, Error, ObjectiveContext, ReferenceSet, TargetSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, RegressorConfig, SearchConfig};

/// Every derived seed of a run, in derivation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub master: u64,
    pub rows: Vec<SeedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub stream: String,
    pub index: u64,
    pub seed: u64,
}

impl SeedManifest {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            rows: Vec::new(),
        }
    }

    pub fn derive(&mut self, stream: &str, index: u64) -> u64 {
        let seed = derive_seed(self.master, stream, index);
        self.rows.push(SeedRow {
            stream: stream.to_string(),
            index,
            seed,
        });
        seed
    }
}

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_data(cfg: &ExperimentConfig, seeds: &mut SeedManifest) -> anyhow::Result<Data> {
    let (train, test) = match &cfg.dataset {
        DatasetConfig::Synthetic { train, test } => (
            synth_dataset("train", train, seeds.derive("synth_train", 0))?,
            synth_dataset("test", test, seeds.derive("synth_test", 0))?,
        ),
        DatasetConfig::Files {
            train,
            test,
            sample_rate_hz,
            channel,
            zscore,
        } => {
            let opts = TsReadOptions {
                sample_rate_hz: *sample_rate_hz,
                channel: *channel,
            };
            let read = |p: &std::path::Path| -> anyhow::Result<Dataset> {
                let d = parse_ts_dataset(p, opts)
                    .with_context(|| format!("cannot load dataset {}", p.display()))?;
                Ok(if *zscore { d.zscored() } else { d })
            };
            (read(train)?, read(test)?)
        }
    };
    if train.is_empty() || test.is_empty() {
        bail!("train and test sets must both be non-empty");
    }
    if train.series_len().is_none() || train.series_len() != test.series_len() {
        bail!("train and test series must all share one length");
    }
    Ok(Data { train, test })
}

/// A fitted model of any configured kind.
pub enum FittedRegressor {
    Ridge(RidgeDescriptorRegressor),
    Knn(KnnDtwRegressor),
    Spectral(SpectralRateRegressor),
}

impl FittedRegressor {
    pub fn as_dyn(&self) -> &dyn Regressor {
        match self {
            FittedRegressor::Ridge(r) => r,
            FittedRegressor::Knn(r) => r,
            FittedRegressor::Spectral(r) => r,
        }
    }

    pub fn ridge(&self) -> Option<&RidgeDescriptorRegressor> {
        match self {
            FittedRegressor::Ridge(r) => Some(r),
            _ => None,
        }
    }
}

pub fn fit_regressor(cfg: &ExperimentConfig, train: &Dataset, band: Option<usize>) -> anyhow::Result<FittedRegressor> {
    Ok(match &cfg.regressor {
        RegressorConfig::Ridge { model: Some(path), .. } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read model file {}", path.display()))?;
            FittedRegressor::Ridge(
                serde_json::from_str(&text).with_context(|| format!("invalid model file {}", path.display()))?,
            )
        }
        RegressorConfig::Ridge { lambda, model: None } => {
            FittedRegressor::Ridge(RidgeDescriptorRegressor::fit(train, *lambda)?)
        }
        RegressorConfig::Knn { k } => FittedRegressor::Knn(KnnDtwRegressor::new(train.clone(), *k, band)?),
        RegressorConfig::Spectral { scale } => FittedRegressor::Spectral(SpectralRateRegressor::new(*scale)?),
    })
}

/// Bootstrap replicates of the configured regressor.
pub fn fit_ensemble(
    cfg: &ExperimentConfig,
    train: &Dataset,
    band: Option<usize>,
    seed: u64,
) -> anyhow::Result<Box<dyn EnsemblePredictor>> {
    let n_boot = cfg.uncertainty.n_boot;
    Ok(match &cfg.regressor {
        RegressorConfig::Knn { k } => Box::new(KnnBootstrapEnsemble::fit(train.clone(), n_boot, *k, band, seed)?),
        RegressorConfig::Ridge { lambda, .. } => {
            let lambda = *lambda;
            Box::new(fit_bootstrap_ensemble(
                train,
                n_boot,
                |d| Ok(Box::new(RidgeDescriptorRegressor::fit(d, lambda)?) as Box<dyn Regressor>),
                seed,
            )?)
        }
        RegressorConfig::Spectral { scale } => {
            let scale = *scale;
            Box::new(fit_bootstrap_ensemble(
                train,
                n_boot,
                |_| Ok(Box::new(SpectralRateRegressor::new(scale)?) as Box<dyn Regressor>),
                seed,
            )?)
        }
    })
}

pub fn select_instances(cfg: &ExperimentConfig, n_test: usize, seeds: &mut SeedManifest) -> anyhow::Result<Vec<usize>> {
    if let Some(idx) = &cfg.selection.instances {
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_test) {
            bail!("instance {bad} is out of range for {n_test} test series");
        }
        return Ok(idx.clone());
    }
    match cfg.selection.count {
        Some(c) => Ok(sample_indices(n_test, c, seeds.derive("selection", 0))?),
        None => Ok((0..n_test).collect()),
    }
}

/// Runs `f` on a pool of `workers` threads; 0 keeps the global pool.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot start worker pool")?;
    Ok(pool.install(f))
}

/// Shared, read-only inputs of every instance search.
pub struct SearchInputs<'a> {
    pub cfg: &'a ExperimentConfig,
    pub search: SearchConfig,
    pub train: &'a Dataset,
    pub refset: &'a ReferenceSet,
    pub regressor: &'a dyn Regressor,
}

impl SearchInputs<'_> {
    pub fn search(&self, query: &morphcf::TimeSeries, label: f64, seed: u64) -> morphcf::Result<(TargetSpec, CfeArchive)> {
        let target = TargetSpec::new(label, self.cfg.tolerance)?;
        let ctx = ObjectiveContext::new(query.clone(), self.cfg.morph.clone(), target)?;
        let archive = run(
            &ctx,
            self.refset,
            self.regressor,
            &self.search.run_config(seed),
            &self.cfg.blend,
            self.cfg.gamma,
        )?;
        Ok((target, archive))
    }
}

/// Nearest unlike neighbour result for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NunReport {
    /// Ground-truth label of the chosen training series; `None` when no
    /// training label lies in the target interval.
    pub label: Option<f64>,
    pub report: EvalReport,
    pub metrics: Option<MemberMetrics>,
}

/// Everything recorded for one explained instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub label: f64,
    pub seed: u64,
    pub target_lower: f64,
    pub target_upper: f64,
    pub cfe: EvalReport,
    pub nun: NunReport,
    pub members: Vec<MemberMetrics>,
}

pub struct InstanceOutcome {
    pub report: InstanceReport,
    pub archive: CfeArchive,
}

pub struct GenerateRun {
    pub seeds: SeedManifest,
    pub ridge: Option<RidgeDescriptorRegressor>,
    pub series_len: usize,
    pub sample_rate_hz: f64,
    /// Per selected instance, in selection order.
    pub outcomes: Vec<(usize, Result<InstanceOutcome, String>)>,
}

pub fn run_generate(cfg: &ExperimentConfig) -> anyhow::Result<GenerateRun> {
    cfg.validate()?;
    let mut seeds = SeedManifest::new(cfg.seed);
    let data = load_data(cfg, &mut seeds)?;
    let len = data.train.series_len().expect("checked non-empty");
    let band = cfg.dtw_band.resolve(len);
    let regressor = fit_regressor(cfg, &data.train, band)?;
    let refset = build_reference_set(&data.train, &cfg.ssa.resolve(len))?;
    let selected = select_instances(cfg, data.test.len(), &mut seeds)?;
    let instance_seeds: Vec<u64> = selected.iter().map(|&i| seeds.derive("search", i as u64)).collect();
    let inputs = SearchInputs {
        cfg,
        search: cfg.search,
        train: &data.train,
        refset: &refset,
        regressor: regressor.as_dyn(),
    };
    let params = cfg.metrics.params(band);

    let outcomes = with_workers(cfg.workers, || {
        selected
            .par_iter()
            .zip(&instance_seeds)
            .map(|(&i, &seed)| {
                let item = &data.test.items()[i];
                let outcome = explain(&inputs, &params, &item.series, item.label, i, seed)
                    .map_err(|e| format!("instance {i}: {e}"));
                (i, outcome)
            })
            .collect()
    })?;
    Ok(GenerateRun {
        seeds,
        ridge: regressor.ridge().cloned(),
        series_len: len,
        sample_rate_hz: data.train.items()[0].series.sample_rate_hz(),
        outcomes,
    })
}

fn explain(
    inputs: &SearchInputs,
    params: &morphcf::metrics::MetricParams,
    x: &morphcf::TimeSeries,
    label: f64,
    index: usize,
    seed: u64,
) -> morphcf::Result<InstanceOutcome> {
    let (target, archive) = inputs.search(x, label, seed)?;
    let (cfe, members) = evaluate_cfe_set(x, &target, &archive, inputs.train, inputs.regressor, params)?;
    let nun = match nun_baseline(x, &target, inputs.train, params.band) {
        Ok(n) => {
            let (report, m) = evaluate_nun(x, &target, &n.series, inputs.train, inputs.regressor, params)?;
            NunReport {
                label: Some(n.label),
                report,
                metrics: Some(m),
            }
        }
        Err(Error::NotFound(_)) => NunReport {
            label: None,
            report: EvalReport::empty(),
            metrics: None,
        },
        Err(e) => return Err(e),
    };
    Ok(InstanceOutcome {
        report: InstanceReport {
            index,
            label,
            seed,
            target_lower: target.lower(),
            target_upper: target.upper(),
            cfe,
            nun,
            members,
        },
        archive,
    })
}

/// One instance of the uncertainty study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyInstance {
    pub index: usize,
    pub archive_size: usize,
    pub bootstrap_mean: f64,
    pub uncertainty: InstanceUncertainty,
}

pub struct UncertaintyRun {
    pub seeds: SeedManifest,
    pub n_boot: usize,
    pub bandwidth: f64,
    pub instances: Vec<StudyInstance>,
    pub bins: Vec<BinReport>,
}

pub fn run_uncertainty(cfg: &ExperimentConfig) -> anyhow::Result<UncertaintyRun> {
    cfg.validate()?;
    let mut seeds = SeedManifest::new(cfg.seed);
    let data = load_data(cfg, &mut seeds)?;
    let len = data.train.series_len().expect("checked non-empty");
    let band = cfg.dtw_band.resolve(len);
    let regressor = fit_regressor(cfg, &data.train, band)?;
    let ensemble = fit_ensemble(cfg, &data.train, band, seeds.derive("bootstrap", 0))?;
    let kde = DescriptorKde::fit(&data.train, cfg.uncertainty.bandwidth)?;
    let refset = build_reference_set(&data.train, &cfg.ssa.resolve(len))?;
    let selected = select_instances(cfg, data.test.len(), &mut seeds)?;
    let instance_seeds: Vec<u64> = selected.iter().map(|&i| seeds.derive("search", i as u64)).collect();
    let inputs = SearchInputs {
        cfg,
        search: cfg.uncertainty_search(),
        train: &data.train,
        refset: &refset,
        regressor: regressor.as_dyn(),
    };
    let level = cfg.uncertainty.level;

    let instances = with_workers(cfg.workers, || {
        selected
            .par_iter()
            .zip(&instance_seeds)
            .map(|(&i, &seed)| {
                let item = &data.test.items()[i];
                let study = || -> anyhow::Result<StudyInstance> {
                    let (_, archive) = inputs.search(&item.series, item.label, seed)?;
                    let boot = ensemble.predict_all(&item.series)?;
                    Ok(StudyInstance {
                        index: i,
                        archive_size: archive.len(),
                        bootstrap_mean: boot.iter().sum::<f64>() / boot.len() as f64,
                        uncertainty: InstanceUncertainty {
                            label: item.label,
                            bootstrap_ci_width: central_interval_width(&boot, level)?,
                            cfe: cfe_dispersion(&archive, ensemble.as_ref())?,
                            kde_nll: kde.nll(&item.series)?,
                        },
                    })
                };
                study().with_context(|| format!("instance {i}"))
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })??;
    let per: Vec<InstanceUncertainty> = instances.iter().map(|s| s.uncertainty.clone()).collect();
    let bins = bin_report(&per, &cfg.uncertainty.bin_edges)?;
    Ok(UncertaintyRun {
        seeds,
        n_boot: ensemble.n_members(),
        bandwidth: kde.bandwidth,
        instances,
        bins,
    })
}
