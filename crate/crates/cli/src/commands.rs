//! Subcommands and their flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use morphcf::dataset::{parse_ts_dataset, synth_dataset, write_ts_dataset, TsReadOptions};
use morphcf::descriptors::profile;
use serde::Serialize;

use crate::config::{DatasetConfig, ExperimentConfig, DEFAULT_CONFIG};
use crate::output::{self, write_seeds};
use crate::pipeline::{run_generate, run_uncertainty, SeedManifest};

#[derive(Debug, Parser)]
#[command(name = "morphcf", version, about = "Morphology-constrained counterfactuals for time-series regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search counterfactuals for selected test instances and score them.
    Generate(RunArgs),
    /// Summarise a generate run into one table of metric means.
    Evaluate {
        /// Output directory of a previous generate run.
        #[arg(long)]
        run: PathBuf,
        /// Summary file; defaults to RUN/summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bootstrap, counterfactual and density uncertainty per label bin.
    Uncertainty(RunArgs),
    /// Write the configured synthetic train and test sets as .ts files.
    Synth {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Print the descriptor profile of every series in a .ts file.
    Inspect {
        file: PathBuf,
        #[arg(long, default_value_t = 125.0)]
        sample_rate: f64,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Print the commented default configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment configuration; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Comma-separated test indices to explain.
    #[arg(long, value_delimiter = ',', conflicts_with = "count")]
    pub instances: Option<Vec<usize>>,
    /// Number of test instances drawn with the master seed.
    #[arg(long)]
    pub count: Option<usize>,
    /// Parallel workers; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

impl RunArgs {
    /// Config with every flag applied. Budget flags set both the main search
    /// and the uncertainty study.
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = self.common.resolve()?;
        if let Some(i) = &self.instances {
            cfg.selection.instances = Some(i.clone());
            cfg.selection.count = None;
        }
        if let Some(c) = self.count {
            cfg.selection.count = Some(c);
            cfg.selection.instances = None;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(p) = self.population {
            cfg.search.population = p;
            cfg.uncertainty.population = Some(p);
        }
        if let Some(g) = self.generations {
            cfg.search.generations = g;
            cfg.uncertainty.generations = Some(g);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.resolve()?;
            let run = run_generate(&cfg)?;
            output::write_generate(&cfg, &run, &cfg.output_dir)?;
            println!("wrote {} instance(s) to {}", run.outcomes.len(), cfg.output_dir.display());
        }
        Command::Evaluate { run, out } => {
            let reports = output::read_reports(&run)?;
            let rows = output::summarize(&reports);
            let path = out.unwrap_or_else(|| run.join("summary.csv"));
            output::write_summary(&path, &rows)?;
            println!("summarised {} instance(s) into {}", reports.len(), path.display());
        }
        Command::Uncertainty(args) => {
            let cfg = args.resolve()?;
            let run = run_uncertainty(&cfg)?;
            output::write_uncertainty(&cfg, &run, &cfg.output_dir)?;
            println!("wrote {} bin(s) to {}", run.bins.len(), cfg.output_dir.display());
        }
        Command::Synth { common } => {
            let cfg = common.resolve()?;
            synth(&cfg, &cfg.output_dir)?;
            println!("wrote train.ts and test.ts to {}", cfg.output_dir.display());
        }
        Command::Inspect {
            file,
            sample_rate,
            channel,
        } => inspect(&file, sample_rate, channel, &mut std::io::stdout().lock())?,
        Command::Config => print!("{DEFAULT_CONFIG}"),
    }
    Ok(())
}

pub fn synth(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let DatasetConfig::Synthetic { train, test } = &cfg.dataset else {
        bail!("synth needs a synthetic dataset in the config");
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create directory {}", out.display()))?;
    let mut seeds = SeedManifest::new(cfg.seed);
    let tr = synth_dataset("train", train, seeds.derive("synth_train", 0))?;
    let te = synth_dataset("test", test, seeds.derive("synth_test", 0))?;
    write_ts_dataset(&tr, &out.join("train.ts"))?;
    write_ts_dataset(&te, &out.join("test.ts"))?;
    write_seeds(&out.join("seeds.csv"), &seeds)
}

#[derive(Serialize)]
struct ProfileRow {
    index: usize,
    label: f64,
    amplitude: f64,
    dominant_freq_hz: f64,
    plateau_frac: f64,
    trend_slope: f64,
    max_gradient: f64,
}

pub fn inspect(file: &Path, sample_rate_hz: f64, channel: usize, out: &mut dyn std::io::Write) -> anyhow::Result<()> {
    let d = parse_ts_dataset(file, TsReadOptions { sample_rate_hz, channel })
        .with_context(|| format!("cannot load dataset {}", file.display()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, it) in d.items().iter().enumerate() {
        let p = profile(&it.series);
        w.serialize(ProfileRow {
            index: i,
            label: it.label,
            amplitude: p.amplitude,
            dominant_freq_hz: p.dominant_freq_hz,
            plateau_frac: p.plateau_frac,
            trend_slope: p.trend_slope,
            max_gradient: p.max_gradient,
        })?;
    }
    out.write_all(&w.into_inner()?)?;
    Ok(())
}
