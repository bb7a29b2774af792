//! Reference-point guided evolutionary search for counterfactual waveforms.
//!
//! One run evolves a population drawn from the reference set:
//!
//! 1. binary tournaments on Pareto rank pick `P` parents,
//! 2. adjacent pairs are recombined with the blending crossover,
//! 3. each child may be nudged towards a reference member by blending mutation,
//! 4. children are evaluated and parents plus children are cut back to `P`
//!    by non-dominated sorting and reference-direction niching.
//!
//! Every feasible waveform seen along the way lands in a deduplicated
//! archive, and a [`GenStats`] row is recorded per generation.

mod indicators;
mod niching;
mod sorting;

use std::collections::HashSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use indicators::{clipped_hypervolume, convergence_metric, diversity_metric, hypervolume};
pub use niching::{environmental_select, niching_select, reference_points};
pub use sorting::{
    assign_ranks, constrained_dominates, non_dominated_sort, pareto_dominates, tournament_indices,
    tournament_select,
};

use crate::error::{Error, Result};
use crate::objectives::{ObjectiveContext, ObjectiveVector};
use crate::operators::{crossover, init_population, mutate, BlendParams, Candidate, ReferenceSet};
use crate::regressors::Regressor;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub population: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub seed: u64,
    /// Das-Dennis divisions for the reference directions.
    #[serde(default = "default_divisions")]
    pub ref_divisions: usize,
}

fn default_divisions() -> usize {
    12
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 50,
            p_crossover: 0.6,
            p_mutation: 0.5,
            seed: 0,
            ref_divisions: default_divisions(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        if self.generations < 1 {
            return Err(Error::arg("at least one generation is required"));
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.ref_divisions < 1 {
            return Err(Error::arg("ref_divisions must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub generation: usize,
    pub median_morph: f64,
    pub median_maxgrad: f64,
    pub median_out: f64,
    pub feasible_fraction: f64,
    pub archive_size: usize,
    pub diversity: f64,
    pub hypervolume: f64,
    pub convergence: f64,
}

/// Feasible counterfactuals collected over a whole run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CfeArchive {
    pub all_feasible: Vec<Candidate>,
    pub final_front: Vec<Candidate>,
    pub per_generation_stats: Vec<GenStats>,
    /// Objective-space reference point used for the hypervolume column.
    pub hv_reference: Vec<f64>,
    #[serde(skip)]
    seen: HashSet<Vec<u64>>,
}

impl CfeArchive {
    /// Adds a feasible, evaluated candidate unless an identical waveform is
    /// already stored. Returns whether it was inserted.
    pub fn insert(&mut self, c: &Candidate) -> bool {
        match c.objective {
            Some(o) if o.feasible => {
                if self.seen.insert(c.waveform.bit_pattern()) {
                    let mut stored = c.clone();
                    stored.rank = None;
                    self.all_feasible.push(stored);
                    true
                } else {
                    false
                }
            }
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.all_feasible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all_feasible.is_empty()
    }

    /// Objective vectors of the non-dominated archive members.
    pub fn front_points(&self) -> Vec<Vec<f64>> {
        let objs: Vec<ObjectiveVector> = self
            .all_feasible
            .iter()
            .filter_map(|c| c.objective)
            .collect();
        match non_dominated_sort(&objs).first() {
            Some(f) => f.iter().map(|&i| objs[i].values().to_vec()).collect(),
            None => Vec::new(),
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn evaluate_all(
    pop: &mut [Candidate],
    ctx: &ObjectiveContext,
    regressor: &dyn Regressor,
    generation: usize,
) -> Result<()> {
    let results: Vec<Result<Option<ObjectiveVector>>> = pop
        .par_iter()
        .enumerate()
        .map(|(i, c)| match c.objective {
            Some(_) => Ok(None),
            None => ctx
                .evaluate(&c.waveform, regressor)
                .map(Some)
                .map_err(|e| Error::Evaluation {
                    candidate: i,
                    message: format!("generation {generation}: {e}"),
                }),
        })
        .collect();
    for (c, r) in pop.iter_mut().zip(results) {
        if let Some(o) = r? {
            c.objective = Some(o);
        }
    }
    Ok(())
}

fn rank_one_points(pop: &[Candidate]) -> Vec<Vec<f64>> {
    pop.iter()
        .filter(|c| c.rank == Some(1))
        .filter_map(|c| c.objective.map(|o| o.values().to_vec()))
        .collect()
}

/// Fixed per-run reference point: 1.1x the worst value of each objective in
/// the initial population.
fn reference_from(pop: &[Candidate]) -> Vec<f64> {
    (0..3)
        .map(|j| {
            let worst = pop
                .iter()
                .filter_map(|c| c.objective.map(|o| o.values()[j]))
                .fold(0.0, f64::max);
            if worst > 0.0 {
                1.1 * worst
            } else {
                1.0
            }
        })
        .collect()
}

fn gen_stats(
    generation: usize,
    pop: &[Candidate],
    archive: &CfeArchive,
    scale: &[f64],
    previous_front: &[Vec<f64>],
) -> GenStats {
    let objs: Vec<ObjectiveVector> = pop.iter().filter_map(|c| c.objective).collect();
    let col = |j: usize| median(&mut objs.iter().map(|o| o.values()[j]).collect::<Vec<_>>());
    let (m0, m1, m2) = (col(0), col(1), col(2));
    let points: Vec<Vec<f64>> = objs.iter().map(|o| o.values().to_vec()).collect();
    let front = rank_one_points(pop);
    GenStats {
        generation,
        median_morph: m0,
        median_maxgrad: m1,
        median_out: m2,
        feasible_fraction: objs.iter().filter(|o| o.feasible).count() as f64 / objs.len().max(1) as f64,
        archive_size: archive.len(),
        diversity: diversity_metric(&points, scale),
        hypervolume: clipped_hypervolume(&archive.front_points(), &archive.hv_reference),
        convergence: convergence_metric(&front, previous_front, scale),
    }
}

/// Runs the search for one query. Generation 0 in the stats is the evaluated
/// initial population; generations `1..=G` follow each variation and
/// selection step.
pub fn run(
    ctx: &ObjectiveContext,
    refset: &ReferenceSet,
    regressor: &dyn Regressor,
    cfg: &RunConfig,
    blend: &BlendParams,
    gamma: usize,
) -> Result<CfeArchive> {
    cfg.validate()?;
    if refset.series_len() != ctx.query.len() {
        return Err(Error::arg(format!(
            "reference series length {} differs from query length {}",
            refset.series_len(),
            ctx.query.len()
        )));
    }
    let refpoints = reference_points(3, cfg.ref_divisions)?;
    let mut rng = seeded(cfg.seed);

    let mut pop = init_population(refset, cfg.population, gamma, rng.random())?;
    evaluate_all(&mut pop, ctx, regressor, 0)?;
    assign_ranks(&mut pop)?;

    let mut archive = CfeArchive {
        hv_reference: reference_from(&pop),
        ..CfeArchive::default()
    };
    for c in &pop {
        archive.insert(c);
    }
    let scale = archive.hv_reference.clone();
    let mut previous_front = rank_one_points(&pop);
    archive
        .per_generation_stats
        .push(gen_stats(0, &pop, &archive, &scale, &[]));

    for g in 1..=cfg.generations {
        let mut offspring = tournament_select(&pop, cfg.population, rng.random())?;
        for pair in offspring.chunks_exact_mut(2) {
            if rng.random::<f64>() < cfg.p_crossover {
                let (c1, c2) = crossover(&pair[0], &pair[1], blend, rng.random())?;
                pair[0] = c1;
                pair[1] = c2;
            }
        }
        for child in offspring.iter_mut() {
            if rng.random::<f64>() < cfg.p_mutation {
                *child = mutate(child, refset, blend, rng.random())?;
            }
        }
        for child in offspring.iter_mut() {
            child.rank = None;
        }
        evaluate_all(&mut offspring, ctx, regressor, g)?;
        for c in &offspring {
            archive.insert(c);
        }
        let mut union = pop;
        union.extend(offspring);
        pop = environmental_select(union, cfg.population, &refpoints, rng.random())?;
        archive
            .per_generation_stats
            .push(gen_stats(g, &pop, &archive, &scale, &previous_front));
        previous_front = rank_one_points(&pop);
    }

    archive.final_front = pop.into_iter().filter(|c| c.rank == Some(1)).collect();
    Ok(archive)
}
