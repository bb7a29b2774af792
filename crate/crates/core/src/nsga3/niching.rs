//! Reference directions and the reference-point niching survival step.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use super::sorting::{non_dominated_sort, objectives_of};
use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;
use crate::operators::Candidate;
use crate::rng::seeded;

/// Das-Dennis points: every vector of `i_k / divisions` with non-negative
/// integers `i_k` summing to `divisions`.
pub fn reference_points(n_obj: usize, divisions: usize) -> Result<Vec<Vec<f64>>> {
    if n_obj < 2 || divisions < 1 {
        return Err(Error::arg("reference points need n_obj >= 2 and divisions >= 1"));
    }
    fn fill(left: usize, depth: usize, n_obj: usize, h: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if depth == n_obj - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&i| i as f64 / h as f64).collect());
            cur.pop();
            return;
        }
        for i in (0..=left).rev() {
            cur.push(i);
            fill(left - i, depth + 1, n_obj, h, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    fill(divisions, 0, n_obj, divisions, &mut Vec::new(), &mut out);
    Ok(out)
}

fn perpendicular_distance(p: &[f64], dir: &[f64]) -> f64 {
    let dd: f64 = dir.iter().map(|d| d * d).sum();
    let proj: f64 = p.iter().zip(dir).map(|(a, d)| a * d).sum::<f64>() / dd;
    p.iter()
        .zip(dir)
        .map(|(a, d)| (a - proj * d).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Translates by the ideal point and scales by hyperplane intercepts through
/// the extreme points, falling back to per-objective maxima when the
/// hyperplane is degenerate.
fn normalize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = points[0].len();
    let ideal: Vec<f64> = (0..m)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let shifted: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&ideal).map(|(a, z)| a - z).collect())
        .collect();

    let extremes: Vec<&Vec<f64>> = (0..m)
        .map(|axis| {
            let asf = |p: &Vec<f64>| {
                p.iter()
                    .enumerate()
                    .map(|(j, v)| v / if j == axis { 1.0 } else { 1e-6 })
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            shifted
                .iter()
                .min_by(|a, b| asf(a).total_cmp(&asf(b)))
                .expect("non-empty")
        })
        .collect();

    let maxima: Vec<f64> = (0..m)
        .map(|j| shifted.iter().map(|p| p[j]).fold(0.0, f64::max))
        .collect();
    let e = DMatrix::from_fn(m, m, |i, j| extremes[i][j]);
    let intercepts: Option<Vec<f64>> = e.lu().solve(&DVector::from_element(m, 1.0)).and_then(|b| {
        let a: Vec<f64> = b.iter().map(|x| 1.0 / x).collect();
        a.iter()
            .zip(&maxima)
            .all(|(&v, &mx)| v.is_finite() && v > 1e-10 && v <= mx * 1e6 + 1e-10)
            .then_some(a)
    });
    let scale: Vec<f64> = intercepts
        .unwrap_or(maxima)
        .into_iter()
        .map(|a| if a > 1e-12 { a } else { 1.0 })
        .collect();

    shifted
        .into_iter()
        .map(|p| p.iter().zip(&scale).map(|(v, s)| v / s).collect())
        .collect()
}

/// Indices (into `points`) of `size` survivors: whole fronts first, then the
/// partially admitted front by niche count.
pub fn niching_select(
    points: &[Vec<f64>],
    fronts: &[Vec<usize>],
    size: usize,
    refpoints: &[Vec<f64>],
    seed: u64,
) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    let mut last: &[usize] = &[];
    for front in fronts {
        if chosen.len() + front.len() <= size {
            chosen.extend_from_slice(front);
            if chosen.len() == size {
                return chosen;
            }
        } else {
            last = front;
            break;
        }
    }
    if last.is_empty() {
        return chosen;
    }

    let pool: Vec<usize> = chosen.iter().chain(last).copied().collect();
    let pool_points: Vec<Vec<f64>> = pool.iter().map(|&i| points[i].clone()).collect();
    let normed = normalize(&pool_points);
    let assoc: Vec<(usize, f64)> = normed
        .iter()
        .map(|p| {
            refpoints
                .iter()
                .enumerate()
                .map(|(r, dir)| (r, perpendicular_distance(p, dir)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect();

    let mut niche = vec![0usize; refpoints.len()];
    for (a, _) in &assoc[..chosen.len()] {
        niche[*a] += 1;
    }
    // Last-front members still waiting, by pool position.
    let mut waiting: Vec<usize> = (chosen.len()..pool.len()).collect();
    let mut rng = seeded(seed);
    while chosen.len() < size {
        let min_count = waiting
            .iter()
            .map(|&w| niche[assoc[w].0])
            .min()
            .expect("front larger than the remaining slots");
        let mut dirs: Vec<usize> = waiting
            .iter()
            .map(|&w| assoc[w].0)
            .filter(|&r| niche[r] == min_count)
            .collect();
        dirs.sort_unstable();
        dirs.dedup();
        let dir = dirs[rng.random_range(0..dirs.len())];
        let members: Vec<usize> = waiting.iter().copied().filter(|&w| assoc[w].0 == dir).collect();
        let pick = if niche[dir] == 0 {
            *members
                .iter()
                .min_by(|&&a, &&b| assoc[a].1.total_cmp(&assoc[b].1).then(a.cmp(&b)))
                .expect("direction has members")
        } else {
            members[rng.random_range(0..members.len())]
        };
        niche[dir] += 1;
        waiting.retain(|&w| w != pick);
        chosen.push(pool[pick]);
    }
    chosen
}

fn objective_points(objs: &[ObjectiveVector]) -> Vec<Vec<f64>> {
    objs.iter().map(|o| o.values().to_vec()).collect()
}

/// Survival selection over parents plus offspring. Survivors carry their
/// Pareto rank within the returned population.
pub fn environmental_select(
    pool: Vec<Candidate>,
    size: usize,
    refpoints: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<Candidate>> {
    if pool.len() < size {
        return Err(Error::arg(format!(
            "cannot select {size} survivors from {} candidates",
            pool.len()
        )));
    }
    let objs = objectives_of(&pool)?;
    let fronts = non_dominated_sort(&objs);
    let keep = niching_select(&objective_points(&objs), &fronts, size, refpoints, seed);
    let mut slots: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
    let mut out: Vec<Candidate> = keep
        .into_iter()
        .map(|i| slots[i].take().expect("indices are unique"))
        .collect();
    super::sorting::assign_ranks(&mut out)?;
    Ok(out)
}
