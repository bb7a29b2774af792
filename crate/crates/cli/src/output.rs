//! Output files. Every CSV starts with a header row; floats are written in
//! shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use morphcf::dataset::{write_ts_dataset, Dataset, LabeledSeries};
use morphcf::metrics::EvalReport;
use morphcf::uncertainty::BinReport;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::pipeline::{GenerateRun, InstanceReport, SeedManifest, UncertaintyRun};

/// Marker left in a run directory when some instance failed.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn create_dir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).with_context(|| format!("cannot create directory {}", p.display()))
}

fn write_text(p: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// CSV with a header even when there are no rows.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> anyhow::Result<()> {
    if rows.is_empty() {
        return write_text(path, &format!("{}\n", header.join(",")));
    }
    write_csv(path, rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    write_text(path, &format!("{text}\n"))
}

pub fn write_seeds(path: &Path, seeds: &SeedManifest) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        stream: &'a str,
        index: u64,
        seed: u64,
    }
    let mut rows = vec![Row {
        stream: "master",
        index: 0,
        seed: seeds.master,
    }];
    rows.extend(seeds.rows.iter().map(|r| Row {
        stream: &r.stream,
        index: r.index,
        seed: r.seed,
    }));
    write_csv(path, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub instance: usize,
    pub label: f64,
    pub validity: Option<f64>,
    pub plausibility: Option<f64>,
    pub proximity: Option<f64>,
    pub temporal_segments: Option<f64>,
    pub temporal_fraction: Option<f64>,
    pub frequency_sparsity: Option<f64>,
    pub max_gradient: Option<f64>,
    pub diversity: usize,
    pub front_size: usize,
}

impl ReportRow {
    pub fn new(instance: usize, label: f64, r: &EvalReport) -> Self {
        Self {
            instance,
            label,
            validity: r.validity,
            plausibility: r.plausibility,
            proximity: r.proximity,
            temporal_segments: r.temporal_segments,
            temporal_fraction: r.temporal_fraction,
            frequency_sparsity: r.frequency_sparsity,
            max_gradient: r.max_gradient,
            diversity: r.diversity,
            front_size: r.front_size,
        }
    }
}

const REPORT_HEADER: &[&str] = &[
    "instance",
    "label",
    "validity",
    "plausibility",
    "proximity",
    "temporal_segments",
    "temporal_fraction",
    "frequency_sparsity",
    "max_gradient",
    "diversity",
    "front_size",
];

pub fn instance_dir(out: &Path, index: usize) -> PathBuf {
    out.join("instances").join(format!("{index:05}"))
}

/// Writes a generate run. Returns an error naming the failed instances, after
/// everything else is on disk, when any instance failed.
pub fn write_generate(cfg: &ExperimentConfig, run: &GenerateRun, out: &Path) -> anyhow::Result<()> {
    create_dir(out)?;
    let marker = out.join(INCOMPLETE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).with_context(|| format!("cannot remove {}", marker.display()))?;
    }
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    write_seeds(&out.join("seeds.csv"), &run.seeds)?;
    if let Some(r) = &run.ridge {
        write_json(&out.join("model.json"), r)?;
    }

    let mut rows = Vec::new();
    let mut nun_rows = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in &run.outcomes {
        let dir = instance_dir(out, *i);
        create_dir(&dir)?;
        match outcome {
            Ok(o) => {
                let r = &o.report;
                let items: Vec<LabeledSeries> = o
                    .archive
                    .all_feasible
                    .iter()
                    .map(|c| {
                        let y = c.objective.map(|v| v.prediction).unwrap_or(f64::NAN);
                        LabeledSeries::new(c.waveform.clone(), y)
                    })
                    .collect::<morphcf::Result<_>>()?;
                let ds = Dataset::new(format!("archive_{i}"), items)?;
                write_ts_dataset(&ds, &dir.join("archive.ts"))?;
                write_csv_with_header(
                    &dir.join("stats.csv"),
                    &[
                        "generation",
                        "median_morph",
                        "median_maxgrad",
                        "median_out",
                        "feasible_fraction",
                        "archive_size",
                        "diversity",
                        "hypervolume",
                        "convergence",
                    ],
                    &o.archive.per_generation_stats,
                )?;
                write_json(&dir.join("report.json"), r)?;
                rows.push(ReportRow::new(*i, r.label, &r.cfe));
                nun_rows.push(NunRow::new(r.nun.label, ReportRow::new(*i, r.label, &r.nun.report)));
            }
            Err(msg) => {
                write_text(&dir.join("error.txt"), &format!("{msg}\n"))?;
                failures.push(msg.clone());
            }
        }
    }
    write_csv_with_header(&out.join("reports.csv"), REPORT_HEADER, &rows)?;
    let mut nun_header = vec!["nun_label"];
    nun_header.extend_from_slice(REPORT_HEADER);
    write_csv_with_header(&out.join("nun_reports.csv"), &nun_header, &nun_rows)?;
    if !failures.is_empty() {
        write_text(&marker, &format!("{}\n", failures.join("\n")))?;
        bail!("{} of {} instances failed:\n{}", failures.len(), run.outcomes.len(), failures.join("\n"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct NunRow {
    nun_label: Option<f64>,
    instance: usize,
    label: f64,
    validity: Option<f64>,
    plausibility: Option<f64>,
    proximity: Option<f64>,
    temporal_segments: Option<f64>,
    temporal_fraction: Option<f64>,
    frequency_sparsity: Option<f64>,
    max_gradient: Option<f64>,
    diversity: usize,
    front_size: usize,
}

impl NunRow {
    fn new(nun_label: Option<f64>, r: ReportRow) -> Self {
        Self {
            nun_label,
            instance: r.instance,
            label: r.label,
            validity: r.validity,
            plausibility: r.plausibility,
            proximity: r.proximity,
            temporal_segments: r.temporal_segments,
            temporal_fraction: r.temporal_fraction,
            frequency_sparsity: r.frequency_sparsity,
            max_gradient: r.max_gradient,
            diversity: r.diversity,
            front_size: r.front_size,
        }
    }
}

/// Reads every `instances/*/report.json` under a generate run directory.
pub fn read_reports(run_dir: &Path) -> anyhow::Result<Vec<InstanceReport>> {
    let dir = run_dir.join("instances");
    let entries = fs::read_dir(&dir).with_context(|| format!("no archives found: cannot read {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no instance reports under {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid report {}", p.display()))
        })
        .collect()
}

/// One summary line per metric, with method means as columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub cfe: Option<f64>,
    pub nun: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(reports: &[InstanceReport]) -> Vec<SummaryRow> {
    type Pick = fn(&EvalReport) -> Option<f64>;
    let metrics: [(&str, Pick); 9] = [
        ("validity", |r| r.validity),
        ("plausibility", |r| r.plausibility),
        ("proximity", |r| r.proximity),
        ("temporal_segments", |r| r.temporal_segments),
        ("temporal_fraction", |r| r.temporal_fraction),
        ("frequency_sparsity", |r| r.frequency_sparsity),
        ("max_gradient", |r| r.max_gradient),
        ("diversity", |r| Some(r.diversity as f64)),
        ("front_size", |r| Some(r.front_size as f64)),
    ];
    metrics
        .iter()
        .map(|&(metric, pick)| SummaryRow {
            metric,
            cfe: mean_of(reports.iter().map(|r| pick(&r.cfe))),
            nun: mean_of(
                reports
                    .iter()
                    .filter(|r| r.nun.label.is_some())
                    .map(|r| pick(&r.nun.report)),
            ),
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    write_csv(path, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct InstanceRow {
    instance: usize,
    label: f64,
    archive_size: usize,
    bootstrap_mean: f64,
    bootstrap_ci_width: f64,
    kde_nll: f64,
    cfe_mean: Option<f64>,
    cfe_ci_width: Option<f64>,
    cfe_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PlotRow {
    bin_center: f64,
    bootstrap_ci_width: Option<f64>,
    cfe_ci_width: Option<f64>,
    kde_nll: Option<f64>,
    cfe_variance: Option<f64>,
}

pub fn write_uncertainty(cfg: &ExperimentConfig, run: &UncertaintyRun, out: &Path) -> anyhow::Result<()> {
    create_dir(out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    write_seeds(&out.join("seeds.csv"), &run.seeds)?;
    write_json(
        &out.join("study.json"),
        &serde_json::json!({ "n_boot": run.n_boot, "kde_bandwidth": run.bandwidth }),
    )?;
    let rows: Vec<InstanceRow> = run
        .instances
        .iter()
        .map(|s| InstanceRow {
            instance: s.index,
            label: s.uncertainty.label,
            archive_size: s.archive_size,
            bootstrap_mean: s.bootstrap_mean,
            bootstrap_ci_width: s.uncertainty.bootstrap_ci_width,
            kde_nll: s.uncertainty.kde_nll,
            cfe_mean: s.uncertainty.cfe.as_ref().map(|d| d.mean),
            cfe_ci_width: s.uncertainty.cfe.as_ref().map(|d| d.ci_width),
            cfe_variance: s.uncertainty.cfe.as_ref().map(|d| d.variance),
        })
        .collect();
    write_csv(&out.join("instances.csv"), &rows)?;
    write_bins(&out.join("bins.csv"), &run.bins)?;
    let plot: Vec<PlotRow> = run
        .bins
        .iter()
        .map(|b| PlotRow {
            bin_center: 0.5 * (b.lower + b.upper),
            bootstrap_ci_width: b.mean_bootstrap_ci_width,
            cfe_ci_width: b.mean_cfe_ci_width,
            kde_nll: b.mean_kde_nll,
            cfe_variance: b.mean_cfe_variance,
        })
        .collect();
    write_csv(&out.join("plot_data.csv"), &plot)
}

pub fn write_bins(path: &Path, bins: &[BinReport]) -> anyhow::Result<()> {
    write_csv(path, bins)
}
