//! Reference set, population initialisation and the cosine cross-fade
//! crossover and mutation operators.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TimeSeries};
use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;
use crate::rng::seeded;
use crate::signal::{ssa_reconstruct, SsaConfig};

/// SSA-denoised training waveforms that seed and steer the search.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    members: Vec<TimeSeries>,
}

impl ReferenceSet {
    pub fn new(members: Vec<TimeSeries>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::arg("reference set must not be empty"))?;
        if members.iter().any(|m| m.len() != first.len()) {
            return Err(Error::Structure("reference members differ in length".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[TimeSeries] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn series_len(&self) -> usize {
        self.members[0].len()
    }
}

pub fn build_reference_set(train: &Dataset, ssa: &SsaConfig) -> Result<ReferenceSet> {
    if train.is_empty() {
        return Err(Error::arg("cannot build a reference set from an empty dataset"));
    }
    let members = train
        .items()
        .par_iter()
        .enumerate()
        .map(|(i, it)| {
            ssa_reconstruct(&it.series, ssa)
                .map_err(|e| e.context(format!("SSA of training series {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ReferenceSet::new(members)
}

/// A waveform under evolution together with its edit window length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub waveform: TimeSeries,
    pub window_len: usize,
    pub objective: Option<ObjectiveVector>,
    pub rank: Option<usize>,
}

impl Candidate {
    pub fn new(waveform: TimeSeries, window_len: usize) -> Self {
        Self {
            waveform,
            window_len,
            objective: None,
            rank: None,
        }
    }

    fn with_waveform(&self, values: Vec<f64>) -> Self {
        Self::new(
            TimeSeries::from_trusted(values, self.waveform.sample_rate_hz()),
            self.window_len,
        )
    }
}

/// Shape of the cosine cross-fade `beta * (1 + cos(eta*pi + nu*pi*u/(|I|-1)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    pub beta: f64,
    pub eta: f64,
    pub nu: f64,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            eta: 0.5,
            nu: 0.5,
        }
    }
}

pub fn blend_weights(interval_len: usize, p: &BlendParams) -> Result<Vec<f64>> {
    if interval_len < 2 {
        return Err(Error::arg(format!(
            "blend interval needs at least 2 samples, got {interval_len}"
        )));
    }
    let denom = (interval_len - 1) as f64;
    Ok((0..interval_len)
        .map(|u| {
            let phase = p.eta * std::f64::consts::PI + p.nu * std::f64::consts::PI * u as f64 / denom;
            p.beta * (1.0 + phase.cos())
        })
        .collect())
}

/// `P` candidates drawn with replacement from the reference set, each with a
/// window length uniform in `[gamma, T/2]`.
pub fn init_population(refset: &ReferenceSet, size: usize, gamma: usize, seed: u64) -> Result<Vec<Candidate>> {
    if size < 2 {
        return Err(Error::arg("population size must be at least 2"));
    }
    let half = refset.series_len() / 2;
    if gamma == 0 || gamma >= half {
        return Err(Error::arg(format!(
            "minimum window {gamma} must lie in [1, {})",
            half
        )));
    }
    let mut rng = seeded(seed);
    Ok((0..size)
        .map(|_| {
            let member = &refset.members()[rng.random_range(0..refset.len())];
            let w = rng.random_range(gamma..=half);
            Candidate::new(member.clone(), w)
        })
        .collect())
}

/// Writes the cross-fade of `own` into `other` over `[b, e)` into `out`.
fn blend_into(out: &mut [f64], own: &[f64], other: &[f64], b: usize, e: usize, p: &BlendParams) {
    if e - b < 2 {
        // A one-sample interval has no defined weight; keep the own sample.
        out[b..e].copy_from_slice(&own[b..e]);
        return;
    }
    let alpha = blend_weights(e - b, p).expect("interval checked above");
    for (u, t) in (b..e).enumerate() {
        // Equal samples are copied so that blending a series with itself is exact.
        out[t] = if own[t] == other[t] {
            own[t]
        } else {
            alpha[u] * own[t] + (1.0 - alpha[u]) * other[t]
        };
    }
}

/// Blending crossover. Offspring `r` keeps parent `r` before its interval,
/// cross-fades inside `[max(0, s - w), min(T, s + w))`, and continues with
/// the other parent afterwards.
pub fn crossover(a: &Candidate, b: &Candidate, p: &BlendParams, seed: u64) -> Result<(Candidate, Candidate)> {
    let n = a.waveform.len();
    if b.waveform.len() != n {
        return Err(Error::arg(format!(
            "crossover parents differ in length ({n} vs {})",
            b.waveform.len()
        )));
    }
    let mut rng = seeded(seed);
    let mut child = |own: &Candidate, other: &Candidate| {
        let w = own.window_len.max(1);
        let s = rng.random_range(0..=n.saturating_sub(w));
        let (start, end) = (s.saturating_sub(w), (s + w).min(n));
        let (ov, tv) = (own.waveform.values(), other.waveform.values());
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(&ov[..start]);
        out.resize(end, 0.0);
        blend_into(&mut out, ov, tv, start, end, p);
        out.extend_from_slice(&tv[end..]);
        own.with_waveform(out)
    };
    let c1 = child(a, b);
    let c2 = child(b, a);
    Ok((c1, c2))
}

/// Blending mutation towards a uniformly drawn reference member over
/// `[s, min(T, s + w))`; samples outside the interval are untouched.
pub fn mutate(a: &Candidate, refset: &ReferenceSet, p: &BlendParams, seed: u64) -> Result<Candidate> {
    let n = a.waveform.len();
    if refset.series_len() != n {
        return Err(Error::arg("reference set and candidate differ in length"));
    }
    let mut rng = seeded(seed);
    let z = &refset.members()[rng.random_range(0..refset.len())];
    let w = a.window_len.max(1);
    let s = rng.random_range(0..=n.saturating_sub(w));
    let e = (s + w).min(n);
    let mut out = a.waveform.values().to_vec();
    let own = a.waveform.values();
    blend_into(&mut out, own, z.values(), s, e, p);
    Ok(a.with_waveform(out))
}
