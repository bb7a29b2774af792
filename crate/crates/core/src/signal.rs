//! Numerical kernels shared by the descriptors, operators and metrics:
//! interpolated percentiles, the one-sided DFT, singular spectrum analysis
//! and dynamic time warping.

use std::cell::RefCell;
use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeries;
use crate::error::{Error, Result};

/// Linear-interpolation percentile of `x` at `q` in `[0, 100]`.
pub fn percentile(x: &[f64], q: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::arg("percentile of an empty sequence"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::arg(format!("percentile rank {q} outside [0, 100]")));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

/// Same as [`percentile`] on data that is already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let pos = (q / 100.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// One-sided magnitude spectrum on the physical frequency grid `k * fs / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_freqs_hz: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitudes `|X[k]|`, `k = 0..=T/2`, of the unnormalised DFT of `x`
/// (demeaned first when `mean_center` is set).
pub fn dft_magnitudes(x: &TimeSeries, mean_center: bool) -> Spectrum {
    let v = x.values();
    let n = v.len();
    let mean = if mean_center {
        v.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let mut buf: Vec<Complex<f64>> = v.iter().map(|&s| Complex::new(s - mean, 0.0)).collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    let bins = n / 2 + 1;
    let fs = x.sample_rate_hz();
    Spectrum {
        bin_freqs_hz: (0..bins).map(|k| k as f64 * fs / n as f64).collect(),
        magnitudes: buf[..bins].iter().map(|c| c.norm()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub window_len: usize,
    pub n_components: usize,
}

impl SsaConfig {
    /// Window `min(250, T/4)` with the leading two components.
    pub fn default_for(len: usize) -> Self {
        Self {
            window_len: (len / 4).clamp(2, 250),
            n_components: 2,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.window_len < 2 || self.window_len > len / 2 {
            return Err(Error::arg(format!(
                "SSA window {} must lie in [2, {}] for length {len}",
                self.window_len,
                len / 2
            )));
        }
        if self.n_components == 0 || self.n_components > self.window_len {
            return Err(Error::arg(format!(
                "SSA needs 1..={} components, got {}",
                self.window_len, self.n_components
            )));
        }
        Ok(())
    }
}

/// Classical SSA: embed with window `L`, decompose the trajectory matrix and
/// rebuild from the leading `n_components` eigentriples by anti-diagonal
/// averaging.
///
/// The left singular vectors are taken from the eigenvectors of the `L x L`
/// lag-covariance matrix `X X^T`, which is built in `O(L^2)` after its first
/// row by sliding the window.
pub fn ssa_reconstruct(x: &TimeSeries, cfg: &SsaConfig) -> Result<TimeSeries> {
    let v = x.values();
    let n = v.len();
    cfg.validate(n)?;
    let l = cfg.window_len;
    let k = n - l + 1;

    let mut c = DMatrix::<f64>::zeros(l, l);
    for j in 0..l {
        c[(0, j)] = (0..k).map(|t| v[t] * v[j + t]).sum();
    }
    for i in 1..l {
        for j in i..l {
            c[(i, j)] = c[(i - 1, j - 1)] - v[i - 1] * v[j - 1] + v[i - 1 + k] * v[j - 1 + k];
        }
    }
    for i in 0..l {
        for j in 0..i {
            c[(i, j)] = c[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut acc = vec![0.0; n];
    for &m in order.iter().take(cfg.n_components) {
        let u = eig.eigenvectors.column(m);
        // Projection of each lagged window onto u.
        let proj: Vec<f64> = (0..k).map(|t| (0..l).map(|i| u[i] * v[i + t]).sum()).collect();
        for i in 0..l {
            let ui = u[i];
            for (t, p) in proj.iter().enumerate() {
                acc[i + t] += ui * p;
            }
        }
    }
    let out: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let count = (t + 1).min(l).min(k).min(n - t);
            s / count as f64
        })
        .collect();
    if out.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(
            "SSA eigendecomposition produced non-finite values".into(),
        ));
    }
    Ok(TimeSeries::from_trusted(out, x.sample_rate_hz()))
}

/// Default Sakoe-Chiba band: none up to 512 samples, `ceil(0.1 T)` above.
pub fn default_band(len: usize) -> Option<usize> {
    if len <= 512 {
        None
    } else {
        Some(len.div_ceil(10))
    }
}

/// Unnormalised DTW cost with absolute-difference local cost and the
/// symmetric match/insert/delete step pattern.
pub fn dtw(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    check_dtw_args(a, b, band)?;
    Ok(dtw_bounded(a, b, band, f64::INFINITY).expect("unbounded DTW always completes"))
}

pub(crate) fn check_dtw_args(a: &[f64], b: &[f64], band: Option<usize>) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("DTW of an empty sequence"));
    }
    if let Some(w) = band {
        if w < a.len().abs_diff(b.len()) {
            return Err(Error::arg(format!(
                "band {w} cannot align lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
    }
    Ok(())
}

/// DTW that gives up (returns `None`) once every cell of a row exceeds
/// `cutoff`. Arguments must already be valid.
pub fn dtw_bounded(a: &[f64], b: &[f64], band: Option<usize>, cutoff: f64) -> Option<f64> {
    let (n, m) = (a.len(), b.len());
    let w = band.unwrap_or(usize::MAX);
    let inf = f64::INFINITY;
    let mut prev = vec![inf; m];
    let mut cur = vec![inf; m];
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = if w == usize::MAX { m - 1 } else { (i + w).min(m - 1) };
        cur.fill(inf);
        let mut row_min = inf;
        for j in lo..=hi {
            let cost = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { inf };
                let left = if j > 0 { cur[j - 1] } else { inf };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { inf };
                up.min(left).min(diag)
            };
            let d = cost + best;
            cur[j] = d;
            row_min = row_min.min(d);
        }
        if row_min > cutoff {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m - 1];
    (d <= cutoff || cutoff.is_infinite()).then_some(d)
}

/// Running envelope of a query for the LB_Keogh lower bound on banded DTW.
#[derive(Debug, Clone)]
pub struct Envelope {
    upper: Vec<f64>,
    lower: Vec<f64>,
    global: (f64, f64),
}

fn sliding_extreme(x: &[f64], w: usize, better: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for j in 0..n {
        let hi = (j + w).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&b| !better(x[b], x[next])) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&f| f + w < j) {
            dq.pop_front();
        }
        out.push(x[*dq.front().expect("window is non-empty")]);
    }
    out
}

impl Envelope {
    pub fn new(query: &[f64], band: Option<usize>) -> Self {
        let w = band.unwrap_or(query.len());
        let lo = query.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = query.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            upper: sliding_extreme(query, w, |a, b| a > b),
            lower: sliding_extreme(query, w, |a, b| a < b),
            global: (lo, hi),
        }
    }

    /// Lower bound on `dtw(query, c, band)`: every sample of `c` is matched
    /// to at least one query sample inside its window. Series of another
    /// length fall back to the global range of the query.
    pub fn lower_bound(&self, c: &[f64]) -> f64 {
        let gap = |v: f64, lo: f64, hi: f64| {
            if v > hi {
                v - hi
            } else if v < lo {
                lo - v
            } else {
                0.0
            }
        };
        if c.len() == self.upper.len() {
            c.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(&v, (&lo, &hi))| gap(v, lo, hi))
                .sum()
        } else {
            c.iter().map(|&v| gap(v, self.global.0, self.global.1)).sum()
        }
    }
}

fn endpoint_bound(q: &[f64], c: &[f64]) -> f64 {
    // Endpoints are always aligned, so their costs bound DTW from below.
    (q[0] - c[0]).abs()
        + if q.len() > 1 || c.len() > 1 {
            (q[q.len() - 1] - c[c.len() - 1]).abs()
        } else {
            0.0
        }
}

/// Lower bounds on the DTW distance from `query` to each candidate.
pub fn dtw_lower_bounds(query: &[f64], env: &Envelope, cands: &[&[f64]]) -> Vec<f64> {
    cands
        .iter()
        .map(|c| env.lower_bound(c).max(endpoint_bound(query, c)))
        .collect()
}

/// The `k` series closest to `query` under DTW, as `(index, distance)` sorted
/// by distance with ties going to the lower index.
///
/// Candidates are visited in order of a lower bound on their distance, so
/// most full DTW evaluations are skipped once `k` close matches are known.
pub fn nearest_by_dtw<'a>(
    query: &[f64],
    candidates: impl IntoIterator<Item = (usize, &'a [f64])>,
    k: usize,
    band: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let cands: Vec<(usize, &[f64])> = candidates.into_iter().collect();
    for (_, c) in &cands {
        check_dtw_args(query, c, band)?;
    }
    let env = Envelope::new(query, band);
    let slices: Vec<&[f64]> = cands.iter().map(|(_, c)| *c).collect();
    let bounds = dtw_lower_bounds(query, &env, &slices);
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| bounds[a].total_cmp(&bounds[b]).then(cands[a].0.cmp(&cands[b].0)));

    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for pos in order {
        let (idx, cand) = cands[pos];
        let cutoff = if best.len() == k {
            best[k - 1].1
        } else {
            f64::INFINITY
        };
        if bounds[pos] > cutoff {
            break;
        }
        if let Some(d) = dtw_bounded(query, cand, band, cutoff) {
            if best.len() == k {
                let (wi, wd) = best[k - 1];
                if d > wd || (d == wd && idx > wi) {
                    continue;
                }
            }
            let at = best
                .iter()
                .position(|&(bi, bd)| d < bd || (d == bd && idx < bi))
                .unwrap_or(best.len());
            best.insert(at, (idx, d));
            best.truncate(k);
        }
    }
    Ok(best)
}
