//! Experiment configuration: one TOML document, overridable from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use morphcf::dataset::SynthDatasetSpec;
use morphcf::metrics::MetricParams;
use morphcf::signal::{default_band, SsaConfig};
use morphcf::uncertainty::Bandwidth;
use morphcf::{BlendParams, MorphSpec, RunConfig};
use serde::{Deserialize, Serialize};

/// The complete default configuration, as written by `morphcf config`.
pub const DEFAULT_CONFIG: &str = r#"# morphcf experiment configuration.
# Relative paths are resolved against the directory holding this file.

# Master seed. Every other seed (dataset synthesis, initialisation,
# operators, tournaments, bootstrap) is derived from it.
seed = 0
output_dir = "morphcf-out"
# Parallel instance workers; 0 uses every available core.
workers = 0
# Half-width delta of the target interval [y - delta, y + delta].
tolerance = 5.0
# Minimum edit window gamma; the maximum is half the series length.
gamma = 50
# Sakoe-Chiba band for every DTW: "auto" (T/10 above 512 samples, else
# unconstrained), "full", or a width in samples.
dtw_band = "auto"

[dataset]
# "synthetic" draws PPG-like recordings; "files" reads .ts files.
kind = "synthetic"

[dataset.train]
n = 200
min_bpm = 60.0
max_bpm = 120.0
# Label bands [lo, hi) that are never sampled, e.g. [[100.0, 110.0]].
excluded_bands = []
duration_s = 8.0
sample_rate_hz = 125.0
noise_std = 0.02
shape_jitter = 0.5

[dataset.test]
n = 20
min_bpm = 60.0
max_bpm = 120.0
excluded_bands = []
duration_s = 8.0
sample_rate_hz = 125.0
noise_std = 0.02
shape_jitter = 0.5

# For recorded data use instead:
# [dataset]
# kind = "files"
# train = "data/TRAIN.ts"
# test = "data/TEST.ts"
# sample_rate_hz = 125.0
# channel = 0
# zscore = false

[regressor]
# "ridge" (descriptor ridge), "knn" (k-NN under DTW) or "spectral".
kind = "ridge"
lambda = 1.0
# Load a fitted ridge model instead of fitting one:
# model = "model.json"

[search]
population = 100
generations = 50
p_crossover = 0.6
p_mutation = 0.5
ref_divisions = 12

# Descriptor terms in the order amplitude, dominant frequency, plateau,
# trend, max gradient. mode is "preserve" or "change" (with tau).
[morph]
epsilon = 1e-8
terms = [
  { mode = "preserve", weight = 1.0 },
  { mode = "preserve", weight = 1.0 },
  { mode = "preserve", weight = 1.0 },
  { mode = "preserve", weight = 0.5 },
  { mode = "preserve", weight = 0.5 },
]

# Cross-fade alpha_u = beta * (1 + cos(eta*pi + nu*pi*u/(|I|-1))).
[blend]
beta = 1.0
eta = 0.5
nu = 0.5

[ssa]
# Embedding window; omitted means min(250, T/4).
# window_len = 250
n_components = 2

[metrics]
k = 5
n_bins = 50
eps = 1e-10
atol = 1e-9
# Score at most this many archive members, evenly spaced, for the costly
# per-member metrics. Validity and diversity always use the whole archive.
# max_members = 50

[selection]
# Test instances to explain: an explicit index list, or a count drawn
# with the master seed. Neither means every test instance.
# instances = [0, 1, 2]
# count = 10

[uncertainty]
n_boot = 20
level = 0.95
bin_edges = [55.0, 65.0, 75.0, 85.0, 95.0, 105.0, 115.0, 125.0, 135.0]
# "scott", "leave_one_out", or { fixed = 0.3 } in z-score units.
bandwidth = "scott"
# Search budget for the study; omitted values fall back to [search].
# population = 100
# generations = 50
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub tolerance: f64,
    pub gamma: usize,
    pub dtw_band: BandSetting,
    pub dataset: DatasetConfig,
    pub regressor: RegressorConfig,
    pub search: SearchConfig,
    pub morph: MorphSpec,
    pub blend: BlendParams,
    pub ssa: SsaSetting,
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub selection: Selection,
    pub uncertainty: UncertaintyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_CONFIG).expect("built-in default config parses")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandSetting {
    Width(usize),
    Named(BandName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandName {
    Auto,
    Full,
}

impl BandSetting {
    pub fn resolve(self, len: usize) -> Option<usize> {
        match self {
            BandSetting::Width(w) => Some(w),
            BandSetting::Named(BandName::Auto) => default_band(len),
            BandSetting::Named(BandName::Full) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        train: SynthDatasetSpec,
        test: SynthDatasetSpec,
    },
    Files {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_rate")]
        sample_rate_hz: f64,
        #[serde(default)]
        channel: usize,
        #[serde(default)]
        zscore: bool,
    },
}

fn default_rate() -> f64 {
    125.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorConfig {
    Ridge {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<PathBuf>,
    },
    Knn {
        k: usize,
    },
    Spectral {
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub ref_divisions: usize,
}

impl SearchConfig {
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            population: self.population,
            generations: self.generations,
            p_crossover: self.p_crossover,
            p_mutation: self.p_mutation,
            seed,
            ref_divisions: self.ref_divisions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaSetting {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_len: Option<usize>,
    pub n_components: usize,
}

impl SsaSetting {
    pub fn resolve(&self, len: usize) -> SsaConfig {
        let d = SsaConfig::default_for(len);
        SsaConfig {
            window_len: self.window_len.unwrap_or(d.window_len),
            n_components: self.n_components,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub k: usize,
    pub n_bins: usize,
    pub eps: f64,
    pub atol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_members: Option<usize>,
}

impl MetricsConfig {
    pub fn params(&self, band: Option<usize>) -> MetricParams {
        MetricParams {
            k: self.k,
            n_bins: self.n_bins,
            eps: self.eps,
            atol: self.atol,
            band,
            max_members: self.max_members,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub n_boot: usize,
    pub level: f64,
    pub bin_edges: Vec<f64>,
    pub bandwidth: Bandwidth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
}

impl ExperimentConfig {
    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetConfig::Files { train, test, .. } = &mut self.dataset {
            fix(train);
            fix(test);
        }
        if let RegressorConfig::Ridge { model: Some(m), .. } = &mut self.regressor {
            fix(m);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            bail!("tolerance must be positive, got {}", self.tolerance);
        }
        if self.gamma == 0 {
            bail!("gamma must be at least 1");
        }
        self.search.run_config(0).validate()?;
        self.morph.validate()?;
        if self.metrics.k == 0 || self.metrics.n_bins == 0 || self.metrics.max_members == Some(0) {
            bail!("metrics.k, metrics.n_bins and metrics.max_members must be positive");
        }
        match self.regressor {
            RegressorConfig::Ridge { lambda, .. } if !(lambda >= 0.0) => {
                bail!("ridge lambda must be non-negative")
            }
            RegressorConfig::Knn { k: 0 } => bail!("knn k must be positive"),
            _ => {}
        }
        let u = &self.uncertainty;
        if u.n_boot < 2 {
            bail!("uncertainty.n_boot must be at least 2");
        }
        if !(u.level > 0.0 && u.level < 1.0) {
            bail!("uncertainty.level must lie in (0, 1)");
        }
        if u.bin_edges.len() < 2 || u.bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            bail!("uncertainty.bin_edges must be at least two increasing values");
        }
        if let Some(idx) = &self.selection.instances {
            if idx.is_empty() {
                bail!("selection.instances is empty");
            }
            if self.selection.count.is_some() {
                bail!("selection takes either instances or count, not both");
            }
        }
        Ok(())
    }

    pub fn uncertainty_search(&self) -> SearchConfig {
        SearchConfig {
            population: self.uncertainty.population.unwrap_or(self.search.population),
            generations: self.uncertainty.generations.unwrap_or(self.search.generations),
            ..self.search
        }
    }
}
