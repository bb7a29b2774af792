//! Morphology-constrained counterfactual search for time-series regressors.
//!
//! The crate covers the full pipeline: loading or synthesising labelled
//! waveforms, computing morphology descriptors, scoring candidates against a
//! black-box [`regressors::Regressor`], evolving counterfactuals with a
//! reference-point guided genetic search, and judging the results with
//! distance, sparsity and uncertainty measures.

pub mod dataset;
pub mod descriptors;
pub mod error;
pub mod metrics;
pub mod nsga3;
pub mod objectives;
pub mod operators;
pub mod regressors;
pub mod rng;
pub mod signal;
pub mod uncertainty;

pub use dataset::{Dataset, LabeledSeries, TimeSeries};
pub use error::{Error, Result};
pub use nsga3::{run, CfeArchive, GenStats, RunConfig};
pub use objectives::{MorphSpec, ObjectiveContext, ObjectiveVector, TargetSpec};
pub use operators::{BlendParams, Candidate, ReferenceSet};
pub use regressors::{Ensemble, EnsemblePredictor, Regressor};
