//! The five-element morphology profile: amplitude, dominant frequency,
//! plateau fraction, trend slope and maximum gradient.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeries;
use crate::signal::{dft_magnitudes, percentile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    Amplitude,
    DominantFrequency,
    Plateau,
    Trend,
    MaxGradient,
}

impl Descriptor {
    pub const ALL: [Descriptor; 5] = [
        Descriptor::Amplitude,
        Descriptor::DominantFrequency,
        Descriptor::Plateau,
        Descriptor::Trend,
        Descriptor::MaxGradient,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::Amplitude => "amplitude",
            Descriptor::DominantFrequency => "dominant_freq_hz",
            Descriptor::Plateau => "plateau_frac",
            Descriptor::Trend => "trend_slope",
            Descriptor::MaxGradient => "max_gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyProfile {
    pub amplitude: f64,
    pub dominant_freq_hz: f64,
    pub plateau_frac: f64,
    pub trend_slope: f64,
    pub max_gradient: f64,
}

impl PropertyProfile {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.amplitude,
            self.dominant_freq_hz,
            self.plateau_frac,
            self.trend_slope,
            self.max_gradient,
        ]
    }

    pub fn get(&self, d: Descriptor) -> f64 {
        self.to_array()[d.index()]
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `Q95(x) - Q5(x)`.
pub fn amplitude(x: &TimeSeries) -> f64 {
    amplitude_sorted(&sorted(x.values()))
}

fn amplitude_sorted(s: &[f64]) -> f64 {
    (percentile_sorted(s, 95.0) - percentile_sorted(s, 5.0)).max(0.0)
}

/// Frequency of the largest demeaned DFT magnitude over bins `0..T/2`,
/// lowest bin on ties.
pub fn dominant_frequency(x: &TimeSeries) -> f64 {
    let spec = dft_magnitudes(x, true);
    let n = x.len();
    let upper = (n / 2).max(1);
    let mut best = 0;
    for k in 1..upper {
        if spec.magnitudes[k] > spec.magnitudes[best] {
            best = k;
        }
    }
    spec.bin_freqs_hz[best]
}

/// Fraction of samples at or above the 60th percentile.
pub fn plateau_fraction(x: &TimeSeries) -> f64 {
    plateau_sorted(x.values(), &sorted(x.values()))
}

fn plateau_sorted(v: &[f64], s: &[f64]) -> f64 {
    let theta = percentile_sorted(s, 60.0);
    v.iter().filter(|&&s| s >= theta).count() as f64 / v.len() as f64
}

/// OLS slope against the sample index, in signal units per sample.
pub fn trend_slope(x: &TimeSeries) -> f64 {
    let v = x.values();
    let n = v.len() as f64;
    let t_bar = (n - 1.0) / 2.0;
    let x_bar = v.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (t, &xt) in v.iter().enumerate() {
        let dt = t as f64 - t_bar;
        cov += dt * (xt - x_bar);
        var += dt * dt;
    }
    cov / var
}

/// 95th percentile of `|x_t - x_{t-1}|`, divided by `dt` when `per_second`.
///
/// The profile descriptor uses `per_second = true`; the smoothness objective
/// uses the raw differences.
pub fn gradient_q95(x: &TimeSeries, per_second: bool) -> f64 {
    let v = x.values();
    let scale = if per_second { x.sample_rate_hz() } else { 1.0 };
    let diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs() * scale).collect();
    percentile_sorted(&sorted(&diffs), 95.0)
}

pub fn max_gradient(x: &TimeSeries) -> f64 {
    gradient_q95(x, true)
}

pub fn profile(x: &TimeSeries) -> PropertyProfile {
    let s = sorted(x.values());
    PropertyProfile {
        amplitude: amplitude_sorted(&s),
        dominant_freq_hz: dominant_frequency(x),
        plateau_frac: plateau_sorted(x.values(), &s),
        trend_slope: trend_slope(x),
        max_gradient: max_gradient(x),
    }
}
