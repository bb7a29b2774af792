//! Constrained non-dominated sorting and rank tournaments.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;
use crate::operators::Candidate;
use crate::rng::seeded;

/// Pareto dominance for minimisation: no worse everywhere, better somewhere.
pub fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Feasible beats infeasible; otherwise plain Pareto dominance.
pub fn constrained_dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        _ => pareto_dominates(&a.values(), &b.values()),
    }
}

/// Fast non-dominated sort under constrained domination. Fronts are returned
/// best first, each listing indices in ascending order.
pub fn non_dominated_sort(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dom_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(&objs[i], &objs[j]) {
                dominated_by_me[i].push(j);
                dom_count[j] += 1;
            } else if constrained_dominates(&objs[j], &objs[i]) {
                dominated_by_me[j].push(i);
                dom_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dom_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                dom_count[j] -= 1;
                if dom_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Stores 1-based front ranks on the candidates.
pub fn assign_ranks(pop: &mut [Candidate]) -> Result<()> {
    let objs = objectives_of(pop)?;
    for (r, front) in non_dominated_sort(&objs).iter().enumerate() {
        for &i in front {
            pop[i].rank = Some(r + 1);
        }
    }
    Ok(())
}

pub(crate) fn objectives_of(pop: &[Candidate]) -> Result<Vec<ObjectiveVector>> {
    pop.iter()
        .enumerate()
        .map(|(i, c)| {
            c.objective.ok_or_else(|| Error::Evaluation {
                candidate: i,
                message: "candidate has not been evaluated".into(),
            })
        })
        .collect()
}

/// Winners of `count` independent binary tournaments on rank; equal ranks
/// are decided by a fair coin.
pub fn tournament_indices(ranks: &[usize], count: usize, seed: u64) -> Vec<usize> {
    if ranks.is_empty() {
        return Vec::new();
    }
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..ranks.len());
            let j = rng.random_range(0..ranks.len());
            match ranks[i].cmp(&ranks[j]) {
                std::cmp::Ordering::Less => i,
                std::cmp::Ordering::Greater => j,
                std::cmp::Ordering::Equal => {
                    if rng.random_bool(0.5) {
                        i
                    } else {
                        j
                    }
                }
            }
        })
        .collect()
}

pub fn tournament_select(pop: &[Candidate], count: usize, seed: u64) -> Result<Vec<Candidate>> {
    let ranks = pop
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.rank
                .ok_or_else(|| Error::arg(format!("candidate {i} has no Pareto rank")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tournament_indices(&ranks, count, seed)
        .into_iter()
        .map(|i| pop[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ov(v: [f64; 3], feasible: bool) -> ObjectiveVector {
        ObjectiveVector {
            morph: v[0],
            maxgrad: v[1],
            out: v[2],
            feasible,
            prediction: 0.0,
        }
    }

    /// Peels fronts by checking every pair directly, independent of the
    /// bookkeeping in `non_dominated_sort`.
    fn brute_force_fronts(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..objs.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let front: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&i| !left.iter().any(|&j| constrained_dominates(&objs[j], &objs[i])))
                .collect();
            left.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn example_fronts() {
        let objs = [
            ov([1.0, 1.0, 1.0], true),
            ov([2.0, 2.0, 2.0], true),
            ov([1.0, 2.0, 1.0], true),
            ov([2.0, 1.0, 2.0], true),
        ];
        assert_eq!(non_dominated_sort(&objs), vec![vec![0], vec![2, 3], vec![1]]);
        assert_eq!(non_dominated_sort(&objs[..1]), vec![vec![0]]);
        let c = [ov([0.0, 0.0, 0.0], false), ov([9.0, 9.0, 9.0], true)];
        assert_eq!(non_dominated_sort(&c), vec![vec![1], vec![0]]);
    }

    #[test]
    fn tournament_rules() {
        assert!(tournament_indices(&[1, 3], 0, 1).is_empty());
        // Rank 3 only wins a tournament in which it meets itself (p = 1/4).
        let ranks = [1, 3];
        let picks = tournament_indices(&ranks, 1000, 4);
        let losers = picks.iter().filter(|&&i| i == 1).count();
        assert!((180..320).contains(&losers), "{losers}");
        assert_eq!(picks, tournament_indices(&ranks, 1000, 4));
    }

    #[test]
    fn equal_ranks_select_uniformly() {
        let n = 10;
        let draws = 100_000;
        let picks = tournament_indices(&vec![1; n], draws, 99);
        let mut counts = vec![0usize; n];
        for i in picks {
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sd, "{c} vs {mean}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(((0u8..6, 0u8..6, 0u8..6), any::<bool>()), 1..200)
        ) {
            let objs: Vec<ObjectiveVector> = pts
                .iter()
                .map(|&((a, b, c), f)| ov([a as f64, b as f64, c as f64], f))
                .collect();
            prop_assert_eq!(non_dominated_sort(&objs), brute_force_fronts(&objs));
        }
    }
}
