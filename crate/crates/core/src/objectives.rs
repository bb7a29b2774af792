//! Objective vector for a candidate counterfactual: morphology deviation,
//! smoothness, and distance of the prediction from the target interval.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeries;
use crate::descriptors::{gradient_q95, profile, Descriptor, PropertyProfile};
use crate::error::{Error, Result};
use crate::regressors::Regressor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Preserve,
    Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphTerm {
    pub mode: Mode,
    pub weight: f64,
    /// Minimum relative change; only read in `Change` mode.
    #[serde(default)]
    pub tau: f64,
}

impl MorphTerm {
    pub fn preserve(weight: f64) -> Self {
        Self {
            mode: Mode::Preserve,
            weight,
            tau: 0.0,
        }
    }

    pub fn change(weight: f64, tau: f64) -> Self {
        Self {
            mode: Mode::Change,
            weight,
            tau,
        }
    }

    /// Per-descriptor loss of a normalised deviation.
    pub fn loss(&self, delta: f64) -> f64 {
        match self.mode {
            Mode::Preserve => delta.abs(),
            Mode::Change => (self.tau - delta.abs()).max(0.0),
        }
    }
}

/// Per-descriptor mode and weight, in profile order
/// (amplitude, dominant frequency, plateau, trend, max gradient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphSpec {
    pub terms: [MorphTerm; 5],
    pub epsilon: f64,
}

impl Default for MorphSpec {
    fn default() -> Self {
        Self {
            terms: [
                MorphTerm::preserve(1.0),
                MorphTerm::preserve(1.0),
                MorphTerm::preserve(1.0),
                MorphTerm::preserve(0.5),
                MorphTerm::preserve(0.5),
            ],
            epsilon: 1e-8,
        }
    }
}

impl MorphSpec {
    pub fn validate(&self) -> Result<()> {
        for (d, t) in Descriptor::ALL.iter().zip(&self.terms) {
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::arg(format!("weight for {} must be positive", d.name())));
            }
            if t.mode == Mode::Change && !(t.tau > 0.0 && t.tau.is_finite()) {
                return Err(Error::arg(format!("tau for {} must be positive", d.name())));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn term(&self, d: Descriptor) -> &MorphTerm {
        &self.terms[d.index()]
    }
}

/// Desired outcome interval `[label - tolerance, label + tolerance]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub label: f64,
    pub tolerance: f64,
}

impl TargetSpec {
    pub fn new(label: f64, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance.is_finite()) || !label.is_finite() {
            return Err(Error::arg("target needs a finite label and positive tolerance"));
        }
        Ok(Self { label, tolerance })
    }

    pub fn lower(&self) -> f64 {
        self.label - self.tolerance
    }

    pub fn upper(&self) -> f64 {
        self.label + self.tolerance
    }

    pub fn contains(&self, y: f64) -> bool {
        (self.label - y).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub morph: f64,
    pub maxgrad: f64,
    pub out: f64,
    pub feasible: bool,
    /// Regressor output the vector was computed from.
    pub prediction: f64,
}

impl ObjectiveVector {
    pub fn values(&self) -> [f64; 3] {
        [self.morph, self.maxgrad, self.out]
    }
}

/// `(phi_j(x') - phi_j(x)) / (|phi_j(x)| + eps)`.
pub fn normalized_deviation(base: f64, candidate: f64, eps: f64) -> f64 {
    (candidate - base) / (base.abs() + eps)
}

pub fn morph_loss_profiles(base: &PropertyProfile, cand: &PropertyProfile, spec: &MorphSpec) -> f64 {
    let (b, c) = (base.to_array(), cand.to_array());
    spec.terms
        .iter()
        .zip(b.iter().zip(&c))
        .map(|(term, (&pb, &pc))| term.weight * term.loss(normalized_deviation(pb, pc, spec.epsilon)))
        .sum()
}

pub fn morph_loss(x: &TimeSeries, xp: &TimeSeries, spec: &MorphSpec) -> f64 {
    morph_loss_profiles(&profile(x), &profile(xp), spec)
}

/// Q95 of the raw absolute first differences (no `dt` scaling).
pub fn maxgrad_objective(xp: &TimeSeries) -> f64 {
    gradient_q95(xp, false)
}

/// Hinge distance outside the target interval and the feasibility flag.
pub fn out_loss(target: &TargetSpec, yhat: f64) -> (f64, bool) {
    let dist = (target.label - yhat).abs();
    ((dist - target.tolerance).max(0.0), dist <= target.tolerance)
}

/// Weight that moves the output hinge into the morphology objective for
/// infeasible candidates.
pub const DEFAULT_INFEASIBLE_PENALTY: f64 = 10.0;

/// Everything about the query instance that stays fixed during a search.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub query: TimeSeries,
    pub query_profile: PropertyProfile,
    pub spec: MorphSpec,
    pub target: TargetSpec,
    pub infeasible_penalty: f64,
}

impl ObjectiveContext {
    pub fn new(query: TimeSeries, spec: MorphSpec, target: TargetSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            query_profile: profile(&query),
            query,
            spec,
            target,
            infeasible_penalty: DEFAULT_INFEASIBLE_PENALTY,
        })
    }

    pub fn evaluate(&self, xp: &TimeSeries, regressor: &dyn Regressor) -> Result<ObjectiveVector> {
        if xp.len() != self.query.len() {
            return Err(Error::arg(format!(
                "candidate length {} differs from query length {}",
                xp.len(),
                self.query.len()
            )));
        }
        let yhat = regressor.predict(xp)?;
        if !yhat.is_finite() {
            return Err(Error::Regressor(format!("non-finite prediction {yhat}")));
        }
        let (out, feasible) = out_loss(&self.target, yhat);
        let mut morph = morph_loss_profiles(&self.query_profile, &profile(xp), &self.spec);
        if !feasible {
            morph += self.infeasible_penalty * out;
        }
        Ok(ObjectiveVector {
            morph,
            maxgrad: maxgrad_objective(xp),
            out,
            feasible,
            prediction: yhat,
        })
    }
}

pub fn evaluate_candidate(
    x: &TimeSeries,
    xp: &TimeSeries,
    spec: &MorphSpec,
    target: &TargetSpec,
    regressor: &dyn Regressor,
) -> Result<ObjectiveVector> {
    ObjectiveContext::new(x.clone(), spec.clone(), *target)?.evaluate(xp, regressor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_ppg;
    use proptest::prelude::*;

    struct Fixed(f64);
    impl Regressor for Fixed {
        fn predict(&self, _x: &TimeSeries) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn ppg() -> TimeSeries {
        synth_ppg(75.0, 8.0, 125.0, 0.01, 3).unwrap().series
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(normalized_deviation(2.0, 2.0, 1e-8), 0.0);
        assert!((normalized_deviation(2.0, 3.0, 1e-8) - 0.5).abs() < 1e-8);
        assert!((normalized_deviation(0.0, 1.0, 1e-8) - 1e8).abs() < 1e-3);
    }

    #[test]
    fn identical_candidate_has_zero_morph_loss() {
        let x = ppg();
        assert_eq!(morph_loss(&x, &x, &MorphSpec::default()), 0.0);
    }

    #[test]
    fn change_hinge() {
        let base = PropertyProfile {
            amplitude: 2.0,
            dominant_freq_hz: 1.25,
            plateau_frac: 0.4,
            trend_slope: 0.1,
            max_gradient: 5.0,
        };
        let cand = PropertyProfile {
            amplitude: 2.1,
            ..base
        };
        let mut spec = MorphSpec::default();
        spec.terms[0] = MorphTerm::change(1.0, 0.2);
        assert!((morph_loss_profiles(&base, &cand, &spec) - 0.15).abs() < 1e-7);

        let doubled = MorphSpec {
            terms: spec.terms.map(|t| MorphTerm { weight: 2.0 * t.weight, ..t }),
            ..spec.clone()
        };
        let a = morph_loss_profiles(&base, &PropertyProfile { trend_slope: 0.3, ..cand }, &spec);
        let b = morph_loss_profiles(&base, &PropertyProfile { trend_slope: 0.3, ..cand }, &doubled);
        assert!((2.0 * a - b).abs() < 1e-12);
    }

    #[test]
    fn maxgrad_examples() {
        let c = TimeSeries::new(vec![1.0; 12], 125.0).unwrap();
        assert_eq!(maxgrad_objective(&c), 0.0);
        let alt = TimeSeries::new((0..12).map(|t| (t % 2) as f64).collect(), 125.0).unwrap();
        assert_eq!(maxgrad_objective(&alt), 1.0);
        let x = ppg();
        assert!((maxgrad_objective(&x) - crate::descriptors::max_gradient(&x) / 125.0).abs() < 1e-12);
    }

    #[test]
    fn out_loss_examples() {
        let t = TargetSpec::new(80.0, 5.0).unwrap();
        assert_eq!(out_loss(&t, 83.0), (0.0, true));
        assert_eq!(out_loss(&t, 88.0), (3.0, false));
        assert_eq!(out_loss(&t, 80.0), (0.0, true));
        assert_eq!(out_loss(&t, 75.0), (0.0, true));
        assert!(TargetSpec::new(80.0, 0.0).is_err());
    }

    #[test]
    fn evaluate_identity_and_penalty() {
        let x = ppg();
        let spec = MorphSpec::default();
        let target = TargetSpec::new(75.0, 5.0).unwrap();
        let v = evaluate_candidate(&x, &x, &spec, &target, &Fixed(75.0)).unwrap();
        assert_eq!(v.morph, 0.0);
        assert_eq!(v.out, 0.0);
        assert!(v.feasible);
        assert_eq!(v.maxgrad, maxgrad_objective(&x));

        let v = evaluate_candidate(&x, &x, &spec, &target, &Fixed(85.0)).unwrap();
        assert_eq!(v.out, 5.0);
        assert!(!v.feasible);
        assert_eq!(v.morph, DEFAULT_INFEASIBLE_PENALTY * 5.0);
        assert_eq!(v, evaluate_candidate(&x, &x, &spec, &target, &Fixed(85.0)).unwrap());
    }

    #[test]
    fn rejects_bad_spec_and_length() {
        let mut spec = MorphSpec::default();
        spec.terms[1] = MorphTerm::change(1.0, 0.0);
        assert!(spec.validate().is_err());
        let x = ppg();
        let short = TimeSeries::new(vec![0.0; 10], 125.0).unwrap();
        let target = TargetSpec::new(75.0, 5.0).unwrap();
        assert!(evaluate_candidate(&x, &short, &MorphSpec::default(), &target, &Fixed(1.0)).is_err());
    }

    proptest! {
        #[test]
        fn out_loss_is_zero_inside_and_increasing_outside(
            y in -100.0f64..100.0, delta in 0.1f64..10.0, a in 0.0f64..50.0, b in 0.0f64..50.0,
        ) {
            let t = TargetSpec::new(y, delta).unwrap();
            let (d1, d2) = if a <= b { (a, b) } else { (b, a) };
            let (l1, f1) = out_loss(&t, y + d1);
            let (l2, _) = out_loss(&t, y - d2);
            if d1 <= delta { prop_assert!(l1 == 0.0 && f1); }
            if d2 > delta && d2 > d1 && d1 > delta { prop_assert!(l2 > l1); }
            prop_assert!(l1 >= 0.0 && l2 >= 0.0);
        }

        #[test]
        fn evaluation_never_nan(v in prop::collection::vec(-10.0f64..10.0, 8..64), yhat in -200.0f64..200.0) {
            let x = TimeSeries::new(v.clone(), 125.0).unwrap();
            let xp = x.map(|s| s * 0.5 + 1.0).unwrap();
            let t = TargetSpec::new(0.0, 5.0).unwrap();
            let o = evaluate_candidate(&x, &xp, &MorphSpec::default(), &t, &Fixed(yhat)).unwrap();
            prop_assert!(o.values().iter().all(|c| c.is_finite() && *c >= 0.0));
        }
    }
}
