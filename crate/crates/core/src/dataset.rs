//! Series and dataset types, the Monash `.ts` regression format, a synthetic
//! PPG generator and bootstrap resampling.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Sample rate assumed for `.ts` files, which do not carry one.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 125.0;

/// A fixed-rate univariate signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    sample_rate_hz: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::arg(format!(
                "time series needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::arg(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            values,
            sample_rate_hz,
        })
    }

    /// Builds a series whose invariants the caller already guarantees
    /// (e.g. convex blends of valid series).
    pub(crate) fn from_trusted(values: Vec<f64>, sample_rate_hz: f64) -> Self {
        debug_assert!(values.len() >= 2 && values.iter().all(|v| v.is_finite()));
        Self {
            values,
            sample_rate_hz,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Sampling interval in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.sample_rate_hz)
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.values.clone();
        v.reverse();
        Self::from_trusted(v, self.sample_rate_hz)
    }

    /// Exact bit pattern of the samples, used for waveform deduplication.
    pub fn bit_pattern(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub series: TimeSeries,
    pub label: f64,
}

impl LabeledSeries {
    pub fn new(series: TimeSeries, label: f64) -> Result<Self> {
        if !label.is_finite() {
            return Err(Error::arg("label must be finite"));
        }
        Ok(Self { series, label })
    }
}

/// A named collection of labelled series sharing length and sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    items: Vec<LabeledSeries>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, items: Vec<LabeledSeries>) -> Result<Self> {
        if let Some(first) = items.first() {
            let (len, rate) = (first.series.len(), first.series.sample_rate_hz());
            for (i, it) in items.iter().enumerate() {
                if it.series.len() != len {
                    return Err(Error::Structure(format!(
                        "series {i} has length {} but series 0 has length {len}",
                        it.series.len()
                    )));
                }
                if it.series.sample_rate_hz() != rate {
                    return Err(Error::Structure(format!(
                        "series {i} has sample rate {} but series 0 has {rate}",
                        it.series.sample_rate_hz()
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            items,
        })
    }

    pub fn items(&self) -> &[LabeledSeries] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.label).collect()
    }

    /// Series length shared by all items, if any.
    pub fn series_len(&self) -> Option<usize> {
        self.items.first().map(|it| it.series.len())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let items = indices
            .iter()
            .map(|&i| {
                self.items
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("index {i} out of range for {} items", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.name.clone(), items)
    }

    /// Per-series z-score normalisation. Constant series are centred only.
    pub fn zscored(&self) -> Self {
        let items = self
            .items
            .iter()
            .map(|it| {
                let v = it.series.values();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                LabeledSeries {
                    series: TimeSeries::from_trusted(
                        v.iter().map(|x| (x - mean) / sd).collect(),
                        it.series.sample_rate_hz(),
                    ),
                    label: it.label,
                }
            })
            .collect();
        Self {
            name: self.name.clone(),
            items,
        }
    }
}

/// Options for reading `.ts` files.
#[derive(Debug, Clone, Copy)]
pub struct TsReadOptions {
    pub sample_rate_hz: f64,
    /// Dimension to keep when a line carries several `:`-separated channels.
    pub channel: usize,
}

impl Default for TsReadOptions {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            channel: 0,
        }
    }
}

pub fn parse_ts_dataset(path: &Path, opts: TsReadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ts_str(&text, &fallback, opts)
}

/// Parses the Monash/UEA regression `.ts` text format.
///
/// Header lines start with `@`, comments with `#`. Each data line is a
/// comma-separated series followed by `:target`; multi-dimensional lines
/// separate channels with `:` and only `opts.channel` is kept.
pub fn parse_ts_str(text: &str, fallback_name: &str, opts: TsReadOptions) -> Result<Dataset> {
    let mut name = fallback_name.to_string();
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('@') {
            let mut parts = header.splitn(2, char::is_whitespace);
            if parts.next().is_some_and(|k| k.eq_ignore_ascii_case("problemName")) {
                if let Some(v) = parts.next() {
                    name = v.trim().to_string();
                }
            }
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (dims, target) = line
            .rsplit_once(':')
            .ok_or_else(|| perr("missing ':' before the target value".into()))?;
        let label: f64 = target
            .trim()
            .parse()
            .map_err(|_| perr(format!("target {:?} is not a number", target.trim())))?;
        let channel = dims.split(':').nth(opts.channel).ok_or_else(|| {
            perr(format!("line has no channel {}", opts.channel))
        })?;
        let values = channel
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| perr(format!("value {:?} is not a number", tok.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        let series =
            TimeSeries::new(values, opts.sample_rate_hz).map_err(|e| perr(e.to_string()))?;
        items.push(LabeledSeries::new(series, label).map_err(|e| perr(e.to_string()))?);
    }
    Dataset::new(name, items)
}

/// Renders a dataset in the `.ts` regression format.
pub fn to_ts_string(d: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@problemName {}", d.name);
    out.push_str("@timeStamps false\n@missing false\n@univariate true\n");
    match d.series_len() {
        Some(len) => {
            let _ = writeln!(out, "@equalLength true\n@seriesLength {len}");
        }
        None => out.push_str("@equalLength true\n"),
    }
    out.push_str("@targetLabel true\n@data\n");
    for it in d.items() {
        let mut first = true;
        for v in it.series.values() {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        let _ = writeln!(out, ":{}", it.label);
    }
    out
}

pub fn write_ts_dataset(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_ts_string(d)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-beat pulse template: a skewed systolic lobe (steep rise, slower
/// decay) plus a smaller dicrotic Gaussian.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PulseShape {
    pub amplitude: f64,
    /// Dicrotic peak height relative to the systolic peak.
    pub dicrotic_ratio: f64,
    /// Fraction of the period at which the systolic peak sits.
    pub systolic_phase: f64,
    /// Width of the rising half of the systolic lobe, as a fraction of the period.
    pub rise_width: f64,
    /// Width of the decaying half of the systolic lobe.
    pub decay_width: f64,
    /// Fraction of the period at which the dicrotic peak sits.
    pub dicrotic_phase: f64,
    /// Dicrotic Gaussian width as a fraction of the period.
    pub dicrotic_width: f64,
    /// Constant added to every sample.
    pub baseline: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            dicrotic_ratio: 0.4,
            systolic_phase: 0.2,
            rise_width: 0.05,
            decay_width: 0.15,
            dicrotic_phase: 0.4,
            dicrotic_width: 0.1,
            baseline: 0.0,
        }
    }
}

impl PulseShape {
    /// Split Gaussian with separate left and right widths, summed over the
    /// neighbouring beats so the template wraps smoothly.
    fn lobe_wrapped(phase: f64, centre: f64, left: f64, right: f64) -> f64 {
        (-1..=1)
            .map(|k| {
                let d = phase - centre - k as f64;
                let w = if d < 0.0 { left } else { right };
                (-0.5 * (d / w).powi(2)).exp()
            })
            .sum()
    }

    /// Template value at a beat phase in `[0, 1)`.
    pub fn at(&self, phase: f64) -> f64 {
        let sys = Self::lobe_wrapped(phase, self.systolic_phase, self.rise_width, self.decay_width);
        let dic = Self::lobe_wrapped(phase, self.dicrotic_phase, self.dicrotic_width, self.dicrotic_width);
        self.baseline + self.amplitude * (sys + self.dicrotic_ratio * dic)
    }
}

/// Synthetic PPG with the default pulse shape.
pub fn synth_ppg(
    heart_rate_bpm: f64,
    duration_s: f64,
    sample_rate_hz: f64,
    noise_std: f64,
    seed: u64,
) -> Result<LabeledSeries> {
    synth_ppg_with_shape(
        heart_rate_bpm,
        duration_s,
        sample_rate_hz,
        noise_std,
        &PulseShape::default(),
        seed,
    )
}

/// Quasi-periodic pulse train at `heart_rate_bpm / 60` Hz plus white Gaussian
/// noise. The first beat starts at phase zero, so noiseless output is exactly
/// periodic whenever the period is a whole number of samples.
pub fn synth_ppg_with_shape(
    heart_rate_bpm: f64,
    duration_s: f64,
    sample_rate_hz: f64,
    noise_std: f64,
    shape: &PulseShape,
    seed: u64,
) -> Result<LabeledSeries> {
    if !(30.0..=220.0).contains(&heart_rate_bpm) {
        return Err(Error::arg(format!(
            "heart rate {heart_rate_bpm} bpm outside [30, 220]"
        )));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::arg("duration must be positive"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::arg("noise std must be non-negative"));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let f0 = heart_rate_bpm / 60.0;
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::arg(e.to_string()))?;
    let values: Vec<f64> = (0..n)
        .map(|t| {
            let phase = (t as f64 * f0 / sample_rate_hz).fract();
            let clean = shape.at(phase);
            if noise_std > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    LabeledSeries::new(TimeSeries::new(values, sample_rate_hz)?, heart_rate_bpm)
}

/// Parameters of a synthetic labelled PPG dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub n: usize,
    pub min_bpm: f64,
    pub max_bpm: f64,
    /// Label bands `[lo, hi)` that are never sampled.
    #[serde(default)]
    pub excluded_bands: Vec<(f64, f64)>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub noise_std: f64,
    /// Relative per-record jitter of amplitude and dicrotic ratio.
    pub shape_jitter: f64,
}

/// Draws `spec.n` recordings with uniformly distributed heart rates and
/// jittered pulse shapes. Labels are rounded to 0.1 bpm.
pub fn synth_dataset(name: &str, spec: &SynthDatasetSpec, seed: u64) -> Result<Dataset> {
    if spec.min_bpm >= spec.max_bpm {
        return Err(Error::arg("min_bpm must be below max_bpm"));
    }
    let allowed: f64 = (spec.max_bpm - spec.min_bpm)
        - spec
            .excluded_bands
            .iter()
            .map(|&(lo, hi)| (hi.min(spec.max_bpm) - lo.max(spec.min_bpm)).max(0.0))
            .sum::<f64>();
    if allowed <= 0.0 {
        return Err(Error::arg("excluded bands cover the whole label range"));
    }
    let mut items = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = seeded(derive_seed(seed, "synth-record", i as u64));
        let hr = loop {
            let hr = (rng.random_range(spec.min_bpm..spec.max_bpm) * 10.0).round() / 10.0;
            if !spec.excluded_bands.iter().any(|&(lo, hi)| hr >= lo && hr < hi) {
                break hr;
            }
        };
        let j = spec.shape_jitter;
        let shape = PulseShape {
            amplitude: 1.0 + j * rng.random_range(-1.0..1.0),
            dicrotic_ratio: 0.4 * (1.0 + j * rng.random_range(-1.0..1.0)),
            ..PulseShape::default()
        };
        items.push(synth_ppg_with_shape(
            hr,
            spec.duration_s,
            spec.sample_rate_hz,
            spec.noise_std,
            &shape,
            rng.random(),
        )?);
    }
    Dataset::new(name, items)
}

/// Indices of a size-`n` resample with replacement.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `count` distinct indices below `n`, drawn without replacement and
/// returned in increasing order.
pub fn sample_indices(n: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > n {
        return Err(Error::arg(format!("cannot draw {count} distinct indices from {n}")));
    }
    let mut rng = seeded(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Same-size resample of `d` with replacement.
pub fn bootstrap_resample(d: &Dataset, seed: u64) -> Result<Dataset> {
    if d.is_empty() {
        return Err(Error::arg("cannot bootstrap an empty dataset"));
    }
    d.subset(&bootstrap_indices(d.len(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> TsReadOptions {
        TsReadOptions::default()
    }

    #[test]
    fn parses_data_line_and_skips_headers() {
        let d = parse_ts_str("@problemName BIDMC32HR\n@data\n1.2,3.4,5.6:80\n", "x", opts()).unwrap();
        assert_eq!(d.name, "BIDMC32HR");
        assert_eq!(d.len(), 1);
        assert_eq!(d.items()[0].series.values(), &[1.2, 3.4, 5.6]);
        assert_eq!(d.items()[0].label, 80.0);
        assert_eq!(d.items()[0].series.sample_rate_hz(), 125.0);
    }

    #[test]
    fn header_only_yields_no_items() {
        let d = parse_ts_str("@problemName BIDMC32HR\n", "x", opts()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn bad_token_reports_line() {
        let err = parse_ts_str("@data\n1,2,3:70\n1.0,oops:80\n", "x", opts()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_ts_str("1,2,3\n", "x", opts()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn ragged_lengths_rejected() {
        let err = parse_ts_str("1,2,3:70\n1,2:80\n", "x", opts()).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn multichannel_line_keeps_selected_channel() {
        let text = "1,2,3:9,8,7:60\n";
        let d = parse_ts_str(text, "x", opts()).unwrap();
        assert_eq!(d.items()[0].series.values(), &[1.0, 2.0, 3.0]);
        let d = parse_ts_str(text, "x", TsReadOptions { channel: 1, ..opts() }).unwrap();
        assert_eq!(d.items()[0].series.values(), &[9.0, 8.0, 7.0]);
        assert_eq!(d.items()[0].label, 60.0);
    }

    #[test]
    fn series_invariants() {
        assert!(TimeSeries::new(vec![1.0], 125.0).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 125.0).is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0], 0.0).is_err());
        assert!(LabeledSeries::new(TimeSeries::new(vec![1.0, 2.0], 1.0).unwrap(), f64::INFINITY).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_ppg(60.0, 32.0, 125.0, 0.05, 1).unwrap();
        let b = synth_ppg(60.0, 32.0, 125.0, 0.05, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 4000);
        assert_eq!(a.label, 60.0);
        let c = synth_ppg(60.0, 32.0, 125.0, 0.05, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_out_of_range_rate() {
        assert!(synth_ppg(29.0, 8.0, 125.0, 0.0, 1).is_err());
        assert!(synth_ppg(221.0, 8.0, 125.0, 0.0, 1).is_err());
        assert!(synth_ppg(80.0, 0.0, 125.0, 0.0, 1).is_err());
    }

    #[test]
    fn noiseless_synth_is_beat_periodic() {
        // 75 bpm at 125 Hz is exactly 100 samples per beat.
        let s = synth_ppg(75.0, 32.0, 125.0, 0.0, 1).unwrap();
        let v = s.series.values();
        let shifted = &v[100..];
        let base = &v[..v.len() - 100];
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let (ma, mb) = (mean(base), mean(shifted));
        let cov: f64 = base.iter().zip(shifted).map(|(a, b)| (a - ma) * (b - mb)).sum();
        let va: f64 = base.iter().map(|a| (a - ma).powi(2)).sum();
        let vb: f64 = shifted.iter().map(|b| (b - mb).powi(2)).sum();
        assert!(cov / (va * vb).sqrt() >= 0.999);
    }

    #[test]
    fn bootstrap_contract() {
        let one = Dataset::new(
            "one",
            vec![LabeledSeries::new(TimeSeries::new(vec![1.0, 2.0], 1.0).unwrap(), 5.0).unwrap()],
        )
        .unwrap();
        let r = bootstrap_resample(&one, 3).unwrap();
        assert_eq!(r, one);
        assert!(bootstrap_resample(&Dataset::new("e", vec![]).unwrap(), 1).is_err());
        assert_eq!(bootstrap_indices(50, 9), bootstrap_indices(50, 9));
        assert_eq!(bootstrap_indices(50, 9).len(), 50);
    }

    #[test]
    fn sampled_indices_are_distinct_and_sorted() {
        let idx = sample_indices(30, 10, 4).unwrap();
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| i < 30));
        assert_eq!(idx, sample_indices(30, 10, 4).unwrap());
        assert_eq!(sample_indices(5, 5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(sample_indices(3, 4, 1).is_err());
    }

    #[test]
    fn synth_dataset_respects_exclusions() {
        let spec = SynthDatasetSpec {
            n: 60,
            min_bpm: 60.0,
            max_bpm: 120.0,
            excluded_bands: vec![(100.0, 110.0)],
            duration_s: 4.0,
            sample_rate_hz: 125.0,
            noise_std: 0.02,
            shape_jitter: 0.1,
        };
        let d = synth_dataset("s", &spec, 4).unwrap();
        assert_eq!(d.len(), 60);
        assert!(d.labels().iter().all(|&y| (60.0..120.0).contains(&y) && !(100.0..110.0).contains(&y)));
        assert_eq!(d, synth_dataset("s", &spec, 4).unwrap());
    }
}
